//! Closed-loop simulation: spring-damper contacts, semi-implicit Euler
//! integration and scenario execution.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::controllers::ControllerKind;
use crate::dynamics::{forward_dynamics, kinetic_energy, point_force_wrench, potential_energy, LinkWrench};
use crate::error::Error;
use crate::kinematics::Kinematics;
use crate::model::{check_len, RobotModel, RobotState};
use crate::numlin::{validate_pinv_config, PinvConfig, WeightSpec};
use crate::tasks::{
    minjerk_step, read_task, resolve_hierarchy, Gain, MinJerkState, PDGains, Selection, TaskHierarchy, TaskKind,
    TaskSpec, DEFAULT_KD, DEFAULT_KP, DEFAULT_TRAJECTORY_TIME,
};

pub const DEFAULT_STIFFNESS: f64 = 2e5;
pub const DEFAULT_DAMPING: f64 = 1e3;
pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactMode {
    Bilateral,
    /// Pushing only: no force once the point leaves the surface.
    Unilateral,
}

/// Point contact against a flat compliant surface.
///
/// The surface passes through `anchor` with outward normal `normal` (pointing
/// from the environment towards the robot). Penetration δ = (anchor − x)·n̂
/// produces a normal force k_s·δ − d·(ẋ·n̂) on the robot. Tangential motion is
/// resisted by a regularized Coulomb law: viscous with coefficient
/// `tangential_damping`, saturated at μ|f_n|.
#[derive(Clone, Debug, PartialEq)]
pub struct SpringContact {
    pub name: String,
    pub body: usize,
    pub point: Vector3<f64>,
    pub anchor: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub stiffness: f64,
    pub damping: f64,
    pub tangential_damping: f64,
    pub mu: f64,
    pub mode: ContactMode,
}

impl SpringContact {
    /// Frictionless unilateral contact with the default stiffness and damping.
    pub fn new(name: &str, body: usize, point: Vector3<f64>, anchor: Vector3<f64>, normal: Vector3<f64>) -> Result<Self, Error> {
        let c = Self {
            name: name.into(),
            body,
            point,
            anchor,
            normal: normal.try_normalize(1e-12).ok_or_else(|| Error::InvalidConfig(format!("contact `{name}`: zero normal")))?,
            stiffness: DEFAULT_STIFFNESS,
            damping: DEFAULT_DAMPING,
            tangential_damping: DEFAULT_DAMPING,
            mu: 0.0,
            mode: ContactMode::Unilateral,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("contact `{}`: {what}", self.name)));
        if !(self.stiffness > 0.0 && self.stiffness.is_finite()) {
            return bad("stiffness must be positive");
        }
        if !(self.damping >= 0.0 && self.tangential_damping >= 0.0 && self.mu >= 0.0) {
            return bad("damping and friction must be non-negative");
        }
        if (self.normal.norm() - 1.0).abs() > 1e-9 {
            return bad("normal must be a unit vector");
        }
        if self.point.iter().chain(self.anchor.iter()).any(|v| !v.is_finite()) {
            return bad("non-finite geometry");
        }
        Ok(())
    }
}

/// Force exerted by the environment on the robot at contact position `x` and
/// velocity `xd`.
pub fn contact_force(contact: &SpringContact, x: &Vector3<f64>, xd: &Vector3<f64>) -> Vector3<f64> {
    let n = contact.normal;
    let depth = (contact.anchor - x).dot(&n);
    let vn = xd.dot(&n);
    let mut f_n = contact.stiffness * depth - contact.damping * vn;
    if contact.mode == ContactMode::Unilateral {
        if depth <= 0.0 {
            return Vector3::zeros();
        }
        f_n = f_n.max(0.0);
    }
    let v_t = xd - n * vn;
    let speed = v_t.norm();
    let friction = if speed > 0.0 {
        let magnitude = (contact.tangential_damping * speed).min(contact.mu * f_n.abs());
        -v_t * (magnitude / speed)
    } else {
        Vector3::zeros()
    };
    n * f_n + friction
}

/// Contact forces (world frame, on the robot) at the current state.
pub fn contact_forces(kin: &Kinematics, contacts: &[SpringContact]) -> Vec<Vector3<f64>> {
    contacts
        .iter()
        .map(|c| contact_force(c, &kin.world_point(c.body, &c.point), &kin.point_velocity(c.body, &c.point)))
        .collect()
}

fn contact_wrenches(kin: &Kinematics, contacts: &[SpringContact], forces: &[Vector3<f64>]) -> Vec<LinkWrench> {
    contacts
        .iter()
        .zip(forces)
        .filter(|(_, f)| f.norm_squared() > 0.0)
        .map(|(c, f)| point_force_wrench(kin, c.body, &kin.world_point(c.body, &c.point), f))
        .collect()
}

/// One semi-implicit Euler step: q̇⁺ = q̇ + dt·q̈, q⁺ = q + dt·q̇⁺.
pub fn integrate_step(
    model: &RobotModel,
    state: &RobotState,
    tau: &DVector<f64>,
    contacts: &[SpringContact],
    dt: f64,
) -> Result<RobotState, Error> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidConfig(format!("time step {dt} must be positive")));
    }
    state.check(model.dof())?;
    let wrenches = if contacts.is_empty() {
        Vec::new()
    } else {
        for c in contacts {
            model.check_link(c.body)?;
        }
        let kin = Kinematics::new(model, &state.q, Some(&state.qd))?;
        let forces = contact_forces(&kin, contacts);
        contact_wrenches(&kin, contacts, &forces)
    };
    let qdd = forward_dynamics(model, &state.q, &state.qd, tau, &wrenches)?;
    let qd = &state.qd + qdd * dt;
    let q = &state.q + &qd * dt;
    if q.iter().chain(qd.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("integrated state"));
    }
    Ok(RobotState::new(q, qd))
}

/// Total mechanical energy along a trajectory produced by [`integrate_step`].
///
/// The integrator's velocities live half a step after the positions, so the
/// velocity at sample k is taken as the mean of q̇ₖ and q̇ₖ₊₁. The result has
/// one entry fewer than `states`.
pub fn synchronized_energy(model: &RobotModel, states: &[RobotState]) -> Result<Vec<f64>, Error> {
    states
        .windows(2)
        .map(|w| {
            let v = (&w[0].qd + &w[1].qd) * 0.5;
            Ok(kinetic_energy(model, &w[0].q, &v)? + potential_energy(model, &w[0].q)?)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Scenario files

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinvSection {
    pub lambda: Option<f64>,
    pub sigma_min: Option<f64>,
    pub z: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightChoice {
    Identity,
    MassInverse,
    InverseMassSquared,
}

impl WeightChoice {
    pub fn spec(self) -> WeightSpec {
        match self {
            WeightChoice::Identity => WeightSpec::Identity,
            WeightChoice::MassInverse => WeightSpec::MassInverse,
            WeightChoice::InverseMassSquared => WeightSpec::InverseMassSquared,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactConfig {
    pub name: String,
    pub body: usize,
    #[serde(default)]
    pub point: [f64; 3],
    /// Outward surface normal (environment towards robot).
    pub normal: [f64; 3],
    /// Normal force at the initial configuration; places the surface so that
    /// the initial penetration is `preload / stiffness`.
    #[serde(default)]
    pub preload: f64,
    pub stiffness: Option<f64>,
    pub damping: Option<f64>,
    pub tangential_damping: Option<f64>,
    #[serde(default)]
    pub mu: f64,
    pub mode: Option<ContactMode>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceConfig {
    /// Stay at the initial position.
    Hold,
    /// Constant offset from the initial position.
    Offset { offset: [f64; 3] },
    /// Circle through the initial position in the plane of two world axes.
    Circle {
        radius: f64,
        period: f64,
        #[serde(default = "default_circle_axes")]
        axes: [usize; 2],
    },
    /// x₀ + a·sin(2πt/period).
    Sine { amplitude: [f64; 3], period: f64 },
}

fn default_circle_axes() -> [usize; 2] {
    [1, 2]
}

impl ReferenceConfig {
    fn validate(&self) -> Result<(), Error> {
        let ok = match self {
            ReferenceConfig::Hold => true,
            ReferenceConfig::Offset { offset } => offset.iter().all(|v| v.is_finite()),
            ReferenceConfig::Circle { radius, period, axes } => {
                radius.is_finite() && *period > 0.0 && axes[0] < 3 && axes[1] < 3 && axes[0] != axes[1]
            }
            ReferenceConfig::Sine { amplitude, period } => amplitude.iter().all(|v| v.is_finite()) && *period > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid reference {self:?}")))
        }
    }

    /// Desired world position at time `t` for a point starting at `x0`.
    pub fn desired(&self, x0: &Vector3<f64>, t: f64) -> Vector3<f64> {
        match self {
            ReferenceConfig::Hold => *x0,
            ReferenceConfig::Offset { offset } => x0 + Vector3::from(*offset),
            ReferenceConfig::Circle { radius, period, axes } => {
                let phase = 2.0 * std::f64::consts::PI * t / period;
                let mut x = *x0;
                x[axes[0]] += radius * (phase.cos() - 1.0);
                x[axes[1]] += radius * phase.sin();
                x
            }
            ReferenceConfig::Sine { amplitude, period } => {
                x0 + Vector3::from(*amplitude) * (2.0 * std::f64::consts::PI * t / period).sin()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKindConfig {
    Motion,
    /// Force through a spring contact.
    Force,
    /// Force with the contact treated as rigid by the controller.
    ForceRigid,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub name: String,
    pub kind: TaskKindConfig,
    pub priority: i32,
    /// Motion tasks: controlled link and point in its frame.
    pub body: Option<usize>,
    #[serde(default)]
    pub point: [f64; 3],
    /// Force tasks: the contact providing the force.
    pub contact: Option<String>,
    /// Controlled world coordinates, e.g. "xyz" or "x".
    #[serde(default = "default_rows")]
    pub rows: String,
    pub reference: Option<ReferenceConfig>,
    /// Force tasks: desired force on the robot, world frame (all three axes).
    pub force: Option<[f64; 3]>,
    pub kp: Option<f64>,
    pub kd: Option<f64>,
}

fn default_rows() -> String {
    "xyz".into()
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: Option<String>,
    /// Robot description, relative to `base_dir`.
    pub robot: PathBuf,
    pub controller: String,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub duration: f64,
    #[serde(default = "default_trajectory_time")]
    pub trajectory_time: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_kp")]
    pub kp: f64,
    #[serde(default = "default_kd")]
    pub kd: f64,
    pub pinv: Option<PinvSection>,
    pub weight: Option<WeightChoice>,
    pub initial_q: Vec<f64>,
    /// Uniform perturbation of the initial configuration, drawn from `seed`.
    #[serde(default)]
    pub initial_noise: f64,
    /// Postural target; defaults to the initial configuration.
    pub posture: Option<Vec<f64>>,
    #[serde(default)]
    pub contacts: Vec<ContactConfig>,
    #[serde(default)]
    pub tasks: Vec<TaskConfig>,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}
fn default_trajectory_time() -> f64 {
    DEFAULT_TRAJECTORY_TIME
}
fn default_kp() -> f64 {
    DEFAULT_KP
}
fn default_kd() -> f64 {
    DEFAULT_KD
}

impl ScenarioConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, Error> {
        let mut cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut cfg = Self::from_toml(&text, base)?;
        if cfg.name.is_none() {
            cfg.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(cfg)
    }

    pub fn robot_path(&self) -> PathBuf {
        self.base_dir.join(&self.robot)
    }

    pub fn controller_kind(&self) -> Result<ControllerKind, Error> {
        self.controller.parse()
    }

    pub fn pinv_config(&self) -> PinvConfig {
        let d = PinvConfig::default();
        match &self.pinv {
            None => d,
            Some(p) => PinvConfig { lambda: p.lambda.unwrap_or(d.lambda), sigma_min: p.sigma_min.unwrap_or(d.sigma_min), z: p.z.unwrap_or(d.z) },
        }
    }

    pub fn set_pinv(&mut self, lambda: Option<f64>, sigma_min: Option<f64>) {
        let mut section = self.pinv.clone().unwrap_or(PinvSection { lambda: None, sigma_min: None, z: None });
        section.lambda = lambda.or(section.lambda);
        section.sigma_min = sigma_min.or(section.sigma_min);
        self.pinv = Some(section);
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

fn parse_rows(rows: &str) -> Result<Selection, Error> {
    let idx = rows
        .chars()
        .map(|c| match c {
            'x' => Ok(0),
            'y' => Ok(1),
            'z' => Ok(2),
            _ => Err(Error::InvalidConfig(format!("invalid row selection `{rows}`"))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Selection::new(idx)
}

/// What one task series records.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeriesKind {
    /// Task-space position, m.
    Motion,
    /// Contact force on the robot, N.
    Force,
    /// Joint positions, rad.
    Posture,
}

impl SeriesKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SeriesKind::Motion => "motion",
            SeriesKind::Force => "force",
            SeriesKind::Posture => "posture",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            SeriesKind::Motion => "m",
            SeriesKind::Force => "N",
            SeriesKind::Posture => "rad",
        }
    }
}

/// Measured value `x` and reference `x_r` of one task at every step.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSeries {
    pub name: String,
    pub kind: SeriesKind,
    pub priority: i32,
    pub x: Vec<DVector<f64>>,
    pub x_r: Vec<DVector<f64>>,
}

impl TaskSeries {
    /// ‖x − x_r‖ at each step.
    pub fn error_norms(&self) -> Vec<f64> {
        self.x.iter().zip(&self.x_r).map(|(x, r)| (x - r).norm()).collect()
    }

    pub fn rmse(&self) -> Option<f64> {
        crate::tasks::rmse_of_norms(&self.error_norms()).ok()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimResult {
    pub scenario: String,
    pub controller: ControllerKind,
    pub time: Vec<f64>,
    /// Hierarchy order, highest priority first.
    pub tasks: Vec<TaskSeries>,
    /// Per step, one force per contact (world frame, on the robot).
    pub contact_forces: Vec<Vec<Vector3<f64>>>,
    /// Wall time of hierarchy resolution plus controller evaluation, s.
    pub controller_time: Vec<f64>,
    pub q: Vec<DVector<f64>>,
    pub qd: Vec<DVector<f64>>,
    pub tau: Vec<DVector<f64>>,
    /// Smallest singular value retained by any level.
    pub min_sv: Vec<f64>,
    pub warnings: Vec<String>,
}

impl SimResult {
    pub fn steps(&self) -> usize {
        self.time.len()
    }

    pub fn task(&self, name: &str) -> Option<&TaskSeries> {
        self.tasks.iter().find(|t| t.name == name)
    }
}

enum Source {
    Motion { reference: ReferenceConfig, x0: Vector3<f64>, rows: Selection, filter: MinJerkState },
    Force { contact: usize, rows: Selection, f_star: DVector<f64> },
    Posture { q_p: DVector<f64> },
}

/// A scenario resolved against its robot: contacts placed, tasks built.
pub struct Scenario {
    pub name: String,
    pub model: RobotModel,
    pub controller: ControllerKind,
    pub dt: f64,
    pub steps: usize,
    pub pinv: PinvConfig,
    pub weight: WeightSpec,
    pub initial: RobotState,
    pub contacts: Vec<SpringContact>,
    pub hierarchy: TaskHierarchy,
    sources: Vec<Source>,
}

impl Scenario {
    pub fn load(cfg: &ScenarioConfig) -> Result<Self, Error> {
        let model = RobotModel::load(cfg.robot_path())?;
        Self::build(cfg, model)
    }

    pub fn build(cfg: &ScenarioConfig, model: RobotModel) -> Result<Self, Error> {
        let n = model.dof();
        if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt = {} must be positive", cfg.dt)));
        }
        if !(cfg.duration >= 0.0 && cfg.duration.is_finite()) {
            return Err(Error::InvalidConfig(format!("duration = {} must be non-negative", cfg.duration)));
        }
        if cfg.duration > 0.0 && cfg.duration < cfg.dt {
            return Err(Error::InvalidConfig("duration shorter than one step".into()));
        }
        let pinv = cfg.pinv_config();
        validate_pinv_config(&pinv)?;
        let controller = cfg.controller_kind()?;
        let gains = PDGains::scalar(cfg.kp, cfg.kd);
        gains.kp.validate(1)?;
        gains.kd.validate(1)?;

        let mut q0 = DVector::from_column_slice(&cfg.initial_q);
        check_len("initial_q", &q0, n)?;
        if cfg.initial_noise > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            for v in q0.iter_mut() {
                *v += rng.random_range(-cfg.initial_noise..=cfg.initial_noise);
            }
        }
        let initial = RobotState::new(q0.clone(), DVector::zeros(n));
        initial.check(n)?;
        let q_p = match &cfg.posture {
            Some(p) => DVector::from_column_slice(p),
            None => q0.clone(),
        };
        check_len("posture", &q_p, n)?;
        let kin = Kinematics::new(&model, &initial.q, Some(&initial.qd))?;

        let mut contacts = Vec::new();
        for c in &cfg.contacts {
            model.check_link(c.body)?;
            let point = Vector3::from(c.point);
            let normal = Vector3::from(c.normal);
            let mut contact = SpringContact::new(&c.name, c.body, point, Vector3::zeros(), normal)?;
            contact.stiffness = c.stiffness.unwrap_or(DEFAULT_STIFFNESS);
            contact.damping = c.damping.unwrap_or(DEFAULT_DAMPING);
            contact.tangential_damping = c.tangential_damping.unwrap_or(DEFAULT_DAMPING);
            contact.mu = c.mu;
            contact.mode = c.mode.unwrap_or(ContactMode::Unilateral);
            contact.validate()?;
            contact.anchor = kin.world_point(c.body, &point) + contact.normal * (c.preload / contact.stiffness);
            if contacts.iter().any(|o: &SpringContact| o.name == c.name) {
                return Err(Error::InvalidConfig(format!("duplicate contact `{}`", c.name)));
            }
            contacts.push(contact);
        }

        let mut specs = Vec::new();
        let mut sources = Vec::new();
        for t in &cfg.tasks {
            let rows = parse_rows(&t.rows)?;
            let task_gains = PDGains { kp: Gain::Scalar(t.kp.unwrap_or(cfg.kp)), kd: Gain::Scalar(t.kd.unwrap_or(cfg.kd)) };
            let missing = |what: &str| Error::InvalidConfig(format!("task `{}` needs `{what}`", t.name));
            let (kind, source) = match t.kind {
                TaskKindConfig::Motion => {
                    let body = t.body.ok_or_else(|| missing("body"))?;
                    model.check_link(body)?;
                    let point = Vector3::from(t.point);
                    let reference = t.reference.clone().unwrap_or(ReferenceConfig::Hold);
                    reference.validate()?;
                    let x0 = kin.world_point(body, &point);
                    let filter = MinJerkState::new(rows.pick(&x0), cfg.trajectory_time)?;
                    (TaskKind::Motion { body, point, rows: rows.clone() }, Source::Motion { reference, x0, rows, filter })
                }
                TaskKindConfig::Force | TaskKindConfig::ForceRigid => {
                    let name = t.contact.as_ref().ok_or_else(|| missing("contact"))?;
                    let index = contacts
                        .iter()
                        .position(|c| &c.name == name)
                        .ok_or_else(|| Error::InvalidConfig(format!("task `{}`: unknown contact `{name}`", t.name)))?;
                    let c = &contacts[index];
                    let f_star = rows.pick(&Vector3::from(t.force.ok_or_else(|| missing("force"))?));
                    let kind = if t.kind == TaskKindConfig::Force {
                        TaskKind::ForceSpring {
                            body: c.body,
                            point: c.point,
                            rows: rows.clone(),
                            f_star: f_star.clone(),
                            stiffness: c.stiffness,
                            anchor: c.anchor,
                        }
                    } else {
                        TaskKind::ForceRigid { body: c.body, point: c.point, rows: rows.clone(), f_star: f_star.clone(), holonomic: true }
                    };
                    (kind, Source::Force { contact: index, rows, f_star })
                }
            };
            specs.push(TaskSpec { name: t.name.clone(), priority: t.priority, kind, gains: task_gains });
            sources.push(source);
        }
        let mut posture = TaskSpec::postural(q_p.clone());
        posture.gains = gains;
        specs.push(posture);
        sources.push(Source::Posture { q_p });

        // hierarchy order is by descending priority; keep sources aligned
        let mut order: Vec<usize> = (0..specs.len()).collect();
        order.sort_by(|&a, &b| specs[b].priority.cmp(&specs[a].priority));
        let hierarchy = TaskHierarchy::new(specs)?;
        hierarchy.validate(&model)?;
        let mut slots: Vec<Option<Source>> = sources.into_iter().map(Some).collect();
        let sources = order.iter().map(|&i| slots[i].take().expect("each source used once")).collect();

        Ok(Self {
            name: cfg.name.clone().unwrap_or_else(|| "scenario".into()),
            model,
            controller,
            dt: cfg.dt,
            steps: cfg.steps(),
            pinv,
            weight: cfg.weight.unwrap_or(WeightChoice::Identity).spec(),
            initial,
            contacts,
            hierarchy,
            sources,
        })
    }

    /// Runs the closed loop. The controller only reads the state; the plant
    /// alone advances it.
    pub fn run(mut self) -> Result<SimResult, Error> {
        let steps = self.steps;
        let mut result = SimResult {
            scenario: self.name.clone(),
            controller: self.controller,
            time: Vec::with_capacity(steps),
            tasks: self
                .hierarchy
                .tasks()
                .iter()
                .zip(&self.sources)
                .map(|(t, s)| TaskSeries {
                    name: t.name.clone(),
                    kind: match s {
                        Source::Motion { .. } => SeriesKind::Motion,
                        Source::Force { .. } => SeriesKind::Force,
                        Source::Posture { .. } => SeriesKind::Posture,
                    },
                    priority: t.priority,
                    x: Vec::with_capacity(steps),
                    x_r: Vec::with_capacity(steps),
                })
                .collect(),
            contact_forces: Vec::with_capacity(steps),
            controller_time: Vec::with_capacity(steps),
            q: Vec::with_capacity(steps),
            qd: Vec::with_capacity(steps),
            tau: Vec::with_capacity(steps),
            min_sv: Vec::with_capacity(steps),
            warnings: Vec::new(),
        };
        let mut state = self.initial.clone();
        for step in 0..steps {
            let t = step as f64 * self.dt;
            let wrap = |e: Error| Error::Simulation { step, source: Box::new(e) };
            let kin = Kinematics::new(&self.model, &state.q, Some(&state.qd)).map_err(wrap)?;
            let forces = contact_forces(&kin, &self.contacts);

            let mut references = Vec::with_capacity(self.sources.len());
            for (i, (task, source)) in self.hierarchy.tasks().iter().zip(&self.sources).enumerate() {
                let series = &mut result.tasks[i];
                match source {
                    Source::Motion { filter, .. } => {
                        let sample = filter.sample();
                        series.x.push(read_task(&kin, &state, task).value);
                        series.x_r.push(sample.x.clone());
                        references.push(Some(sample));
                    }
                    Source::Force { contact, rows, f_star } => {
                        series.x.push(rows.pick(&forces[*contact]));
                        series.x_r.push(f_star.clone());
                        references.push(None);
                    }
                    Source::Posture { q_p } => {
                        series.x.push(state.q.clone());
                        series.x_r.push(q_p.clone());
                        references.push(None);
                    }
                }
            }

            let start = Instant::now();
            let output = resolve_hierarchy(&self.model, &state, &self.hierarchy, &references, self.pinv, self.weight.clone())
                .and_then(|input| self.controller.compute(&input))
                .map_err(wrap)?;
            let elapsed = start.elapsed().as_secs_f64();

            for w in &output.diagnostics.warnings {
                if result.warnings.len() < 100 {
                    result.warnings.push(format!("step {step}: {w}"));
                }
            }
            result.time.push(t);
            result.controller_time.push(elapsed);
            result.min_sv.push(output.diagnostics.min_sv());
            result.q.push(state.q.clone());
            result.qd.push(state.qd.clone());
            result.contact_forces.push(forces);
            let next = integrate_step(&self.model, &state, &output.tau, &self.contacts, self.dt).map_err(wrap)?;
            result.tau.push(output.tau);
            state = next;

            for source in &mut self.sources {
                if let Source::Motion { reference, x0, rows, filter } = source {
                    let desired = rows.pick(&reference.desired(x0, t));
                    let (next, _) = minjerk_step(filter, &desired, self.dt).map_err(wrap)?;
                    *filter = next;
                }
            }
        }
        Ok(result)
    }
}

/// Loads the robot, builds the scenario and runs it.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<SimResult, Error> {
    Scenario::load(cfg)?.run()
}
