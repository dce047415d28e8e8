//! Tasks, reference laws and trajectory generation.

use nalgebra::{DMatrix, DVector, Matrix4, SymmetricEigen, Vector3};

use crate::controllers::{ContactConstraint, HierarchyInput, MotionLevel};
use crate::dynamics::point_force_wrench;
use crate::error::Error;
use crate::kinematics::Kinematics;
use crate::model::{check_len, RobotModel, RobotState};
use crate::numlin::{PinvConfig, WeightSpec};

pub const DEFAULT_KP: f64 = 10.0;
pub const DEFAULT_KD: f64 = 5.0;
pub const DEFAULT_TRAJECTORY_TIME: f64 = 1.0;

/// A gain matrix. Scalars and diagonals avoid dense products.
#[derive(Clone, Debug, PartialEq)]
pub enum Gain {
    Scalar(f64),
    Diagonal(DVector<f64>),
    Full(DMatrix<f64>),
}

impl Gain {
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Gain::Scalar(k) => v * *k,
            Gain::Diagonal(d) => d.component_mul(v),
            Gain::Full(m) => m * v,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<(), Error> {
        let ok = match self {
            Gain::Scalar(k) => k.is_finite() && *k > 0.0,
            Gain::Diagonal(d) => {
                check_len("gain diagonal", d, dim)?;
                d.iter().all(|k| k.is_finite() && *k > 0.0)
            }
            Gain::Full(m) => {
                if m.shape() != (dim, dim) {
                    return Err(Error::Dimension { what: "gain matrix", expected: dim, got: m.nrows() });
                }
                (m - m.transpose()).amax() <= 1e-10
                    && SymmetricEigen::new(m.clone()).eigenvalues.iter().all(|&e| e > 1e-10)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("gain must be symmetric positive definite".into()))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PDGains {
    pub kp: Gain,
    pub kd: Gain,
}

impl Default for PDGains {
    fn default() -> Self {
        Self { kp: Gain::Scalar(DEFAULT_KP), kd: Gain::Scalar(DEFAULT_KD) }
    }
}

impl PDGains {
    pub fn scalar(kp: f64, kd: f64) -> Self {
        Self { kp: Gain::Scalar(kp), kd: Gain::Scalar(kd) }
    }
}

/// Position, velocity and acceleration reference at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct RefSample {
    pub x: DVector<f64>,
    pub xd: DVector<f64>,
    pub xdd: DVector<f64>,
}

impl RefSample {
    pub fn hold(x: DVector<f64>) -> Self {
        let m = x.len();
        Self { x, xd: DVector::zeros(m), xdd: DVector::zeros(m) }
    }
}

/// ẍ* = ẍ_r + K_d(ẋ_r − ẋ) + K_p(x_r − x).
pub fn pd_reference(gains: &PDGains, r: &RefSample, x: &DVector<f64>, xd: &DVector<f64>) -> Result<DVector<f64>, Error> {
    let m = r.x.len();
    for (what, v) in [("reference velocity", &r.xd), ("reference acceleration", &r.xdd), ("task position", x), ("task velocity", xd)] {
        check_len(what, v, m)?;
    }
    Ok(&r.xdd + gains.kd.apply(&(&r.xd - xd)) + gains.kp.apply(&(&r.x - x)))
}

/// q̈_p* = K_p(q_p − q) − K_d q̇.
pub fn postural_reference(kp: &Gain, kd: &Gain, q_p: &DVector<f64>, q: &DVector<f64>, qd: &DVector<f64>) -> Result<DVector<f64>, Error> {
    check_len("q", q, q_p.len())?;
    check_len("qd", qd, q_p.len())?;
    Ok(kp.apply(&(q_p - q)) - kd.apply(qd))
}

/// Coordinates of a point task: a non-empty subset of {x, y, z}.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Selection(Vec<usize>);

impl Selection {
    pub fn all() -> Self {
        Self(vec![0, 1, 2])
    }

    pub fn new(rows: Vec<usize>) -> Result<Self, Error> {
        let mut seen = [false; 3];
        if rows.is_empty() {
            return Err(Error::InvalidHierarchy("empty coordinate selection".into()));
        }
        for &r in &rows {
            if r > 2 || seen[r] {
                return Err(Error::InvalidHierarchy(format!("invalid coordinate selection {rows:?}")));
            }
            seen[r] = true;
        }
        Ok(Self(rows))
    }

    pub fn rows(&self) -> &[usize] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn pick(&self, v: &Vector3<f64>) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.0.iter().map(|&r| v[r]))
    }

    pub fn embed(&self, v: &DVector<f64>) -> Vector3<f64> {
        let mut out = Vector3::zeros();
        for (k, &r) in self.0.iter().enumerate() {
            out[r] = v[k];
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TaskKind {
    Motion {
        body: usize,
        point: Vector3<f64>,
        rows: Selection,
    },
    Postural {
        q_p: DVector<f64>,
    },
    /// Rigid contact: the point cannot accelerate along `rows`, and the
    /// environment should push on the robot with `f_star`.
    ForceRigid {
        body: usize,
        point: Vector3<f64>,
        rows: Selection,
        f_star: DVector<f64>,
        holonomic: bool,
    },
    /// Linear-spring contact with stiffness `stiffness` anchored at
    /// `anchor`; realized as a position task at `anchor − f*/k_s` plus the
    /// expected contact wrench.
    ForceSpring {
        body: usize,
        point: Vector3<f64>,
        rows: Selection,
        f_star: DVector<f64>,
        stiffness: f64,
        anchor: Vector3<f64>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub name: String,
    pub priority: i32,
    pub kind: TaskKind,
    pub gains: PDGains,
}

impl TaskSpec {
    pub fn dim(&self, n: usize) -> usize {
        match &self.kind {
            TaskKind::Motion { rows, .. } | TaskKind::ForceRigid { rows, .. } | TaskKind::ForceSpring { rows, .. } => rows.dim(),
            TaskKind::Postural { .. } => n,
        }
    }

    pub fn motion(name: &str, priority: i32, body: usize, point: Vector3<f64>, rows: Selection) -> Self {
        Self { name: name.into(), priority, kind: TaskKind::Motion { body, point, rows }, gains: PDGains::default() }
    }

    pub fn postural(q_p: DVector<f64>) -> Self {
        Self { name: "posture".into(), priority: 0, kind: TaskKind::Postural { q_p }, gains: PDGains::default() }
    }

    pub fn is_motion_like(&self) -> bool {
        matches!(self.kind, TaskKind::Motion { .. } | TaskKind::ForceSpring { .. })
    }
}

/// Task stack sorted by descending priority, posture last.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskHierarchy {
    tasks: Vec<TaskSpec>,
}

impl TaskHierarchy {
    pub fn new(mut tasks: Vec<TaskSpec>) -> Result<Self, Error> {
        tasks.sort_by_key(|t| std::cmp::Reverse(t.priority));
        for w in tasks.windows(2) {
            if w[0].priority == w[1].priority {
                return Err(Error::InvalidHierarchy(format!(
                    "tasks `{}` and `{}` share priority {}",
                    w[0].name, w[1].name, w[0].priority
                )));
            }
        }
        let postural: Vec<_> = tasks.iter().filter(|t| matches!(t.kind, TaskKind::Postural { .. })).collect();
        if postural.len() != 1 || postural[0].priority != 0 {
            return Err(Error::InvalidHierarchy("exactly one postural task with priority 0 is required".into()));
        }
        if tasks.last().map(|t| t.priority) != Some(0) {
            return Err(Error::InvalidHierarchy("postural task must have the lowest priority".into()));
        }
        let rigid: Vec<usize> = tasks
            .iter()
            .enumerate()
            .filter(|(_, t)| matches!(t.kind, TaskKind::ForceRigid { .. }))
            .map(|(i, _)| i)
            .collect();
        if rigid.len() > 1 {
            return Err(Error::InvalidHierarchy("at most one rigid force task is allowed".into()));
        }
        if rigid.first().is_some_and(|&i| i != 0) {
            return Err(Error::InvalidHierarchy("a rigid force task must have the highest priority".into()));
        }
        for t in &tasks {
            match &t.kind {
                TaskKind::ForceRigid { holonomic: false, .. } => {
                    return Err(Error::InvalidHierarchy("only holonomic rigid contacts are supported".into()))
                }
                TaskKind::ForceRigid { rows, f_star, .. } | TaskKind::ForceSpring { rows, f_star, .. }
                    if f_star.len() != rows.dim() =>
                {
                    return Err(Error::Dimension { what: "desired force", expected: rows.dim(), got: f_star.len() })
                }
                TaskKind::ForceSpring { stiffness, .. } if !(*stiffness > 0.0 && stiffness.is_finite()) => {
                    return Err(Error::InvalidHierarchy("spring stiffness must be positive".into()))
                }
                _ => {}
            }
        }
        Ok(Self { tasks })
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn has_rigid_contact(&self) -> bool {
        self.tasks.iter().any(|t| matches!(t.kind, TaskKind::ForceRigid { .. }))
    }

    /// Checks body indices and dimensions against a model.
    pub fn validate(&self, model: &RobotModel) -> Result<(), Error> {
        let n = model.dof();
        for t in &self.tasks {
            match &t.kind {
                TaskKind::Motion { body, .. } | TaskKind::ForceRigid { body, .. } | TaskKind::ForceSpring { body, .. } => {
                    model.check_link(*body)?
                }
                TaskKind::Postural { q_p } => check_len("postural target", q_p, n)?,
            }
            let m = t.dim(n);
            t.gains.kp.validate(m)?;
            t.gains.kd.validate(m)?;
        }
        Ok(())
    }
}

/// Third-order critically damped reference filter, triple pole at −6/T per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct MinJerkState {
    pub pos: DVector<f64>,
    pub vel: DVector<f64>,
    pub acc: DVector<f64>,
    pub trajectory_time: f64,
}

impl MinJerkState {
    pub fn new(x0: DVector<f64>, trajectory_time: f64) -> Result<Self, Error> {
        if !(trajectory_time > 0.0 && trajectory_time.is_finite()) {
            return Err(Error::InvalidConfig("trajectory time must be positive".into()));
        }
        let m = x0.len();
        Ok(Self { pos: x0, vel: DVector::zeros(m), acc: DVector::zeros(m), trajectory_time })
    }

    pub fn sample(&self) -> RefSample {
        RefSample { x: self.pos.clone(), xd: self.vel.clone(), xdd: self.acc.clone() }
    }

    /// Exact zero-order-hold discretization (Φ, Γ) for one step of `dt`.
    fn transition(&self, dt: f64) -> Matrix4<f64> {
        let w = 6.0 / self.trajectory_time;
        #[rustfmt::skip]
        let aug = Matrix4::new(
            0.0, 1.0, 0.0, 0.0,
            0.0, 0.0, 1.0, 0.0,
            -w * w * w, -3.0 * w * w, -3.0 * w, w * w * w,
            0.0, 0.0, 0.0, 0.0,
        );
        (aug * dt).exp()
    }
}

/// Advances the filter by `dt` with the input held at `x_d` and returns the
/// new state with its (position, velocity, acceleration) sample.
pub fn minjerk_step(state: &MinJerkState, x_d: &DVector<f64>, dt: f64) -> Result<(MinJerkState, RefSample), Error> {
    check_len("desired trajectory", x_d, state.pos.len())?;
    if !(dt > 0.0 && dt <= state.trajectory_time / 10.0) {
        return Err(Error::InvalidConfig(format!(
            "minimum-jerk step {dt} must lie in (0, T/10] for T = {}",
            state.trajectory_time
        )));
    }
    if x_d.iter().chain(state.pos.iter()).chain(state.vel.iter()).chain(state.acc.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("minimum-jerk input"));
    }
    let phi = state.transition(dt);
    let mut next = state.clone();
    for k in 0..x_d.len() {
        let s = nalgebra::Vector4::new(state.pos[k], state.vel[k], state.acc[k], x_d[k]);
        let out = phi * s;
        next.pos[k] = out[0];
        next.vel[k] = out[1];
        next.acc[k] = out[2];
    }
    let sample = next.sample();
    Ok((next, sample))
}

/// √(1/N Σ ‖x − x_r‖²).
pub fn rmse(series: &[(DVector<f64>, DVector<f64>)]) -> Result<f64, Error> {
    if series.is_empty() {
        return Err(Error::InvalidConfig("rmse of an empty series".into()));
    }
    let mut sum = 0.0;
    for (x, r) in series {
        check_len("rmse sample", r, x.len())?;
        sum += (x - r).norm_squared();
    }
    Ok((sum / series.len() as f64).sqrt())
}

/// RMSE from per-sample error norms.
pub fn rmse_of_norms(norms: &[f64]) -> Result<f64, Error> {
    if norms.is_empty() {
        return Err(Error::InvalidConfig("rmse of an empty series".into()));
    }
    Ok((norms.iter().map(|e| e * e).sum::<f64>() / norms.len() as f64).sqrt())
}

/// Measured value of each task for logging: task-space position for motion
/// tasks (and spring tasks), joint positions for posture. Rigid force tasks
/// report the desired force.
#[derive(Clone, Debug)]
pub struct TaskReading {
    pub value: DVector<f64>,
    pub velocity: DVector<f64>,
}

pub fn read_task(kin: &Kinematics, state: &RobotState, task: &TaskSpec) -> TaskReading {
    match &task.kind {
        TaskKind::Motion { body, point, rows } | TaskKind::ForceSpring { body, point, rows, .. } => TaskReading {
            value: rows.pick(&kin.world_point(*body, point)),
            velocity: rows.pick(&kin.point_velocity(*body, point)),
        },
        TaskKind::Postural { .. } => TaskReading { value: state.q.clone(), velocity: state.qd.clone() },
        TaskKind::ForceRigid { f_star, .. } => TaskReading { value: f_star.clone(), velocity: DVector::zeros(f_star.len()) },
    }
}

/// Builds the controller input for one control step.
///
/// `references[i]` is the reference of task `i` (hierarchy order); it is
/// required for motion tasks and ignored for the others.
pub fn resolve_hierarchy<'a>(
    model: &'a RobotModel,
    state: &'a RobotState,
    hierarchy: &TaskHierarchy,
    references: &[Option<RefSample>],
    pinv: PinvConfig,
    weight: WeightSpec,
) -> Result<HierarchyInput<'a>, Error> {
    state.check(model.dof())?;
    if references.len() != hierarchy.tasks().len() {
        return Err(Error::Dimension { what: "task references", expected: hierarchy.tasks().len(), got: references.len() });
    }
    let kin = Kinematics::new(model, &state.q, Some(&state.qd))?;
    let mut levels = Vec::new();
    let mut contact = None;
    let mut posture_acc = None;
    let mut expected_wrenches = Vec::new();
    for (task, reference) in hierarchy.tasks().iter().zip(references) {
        match &task.kind {
            TaskKind::Motion { body, point, rows } => {
                let r = reference
                    .as_ref()
                    .ok_or_else(|| Error::InvalidHierarchy(format!("motion task `{}` has no reference", task.name)))?;
                let reading = read_task(&kin, state, task);
                levels.push(MotionLevel {
                    name: task.name.clone(),
                    jacobian: kin.point_jacobian_rows(model, *body, point, rows.rows()),
                    bias: rows.pick(&kin.point_bias(*body, point)),
                    acc_des: pd_reference(&task.gains, r, &reading.value, &reading.velocity)?,
                });
            }
            TaskKind::ForceSpring { body, point, rows, f_star, stiffness, anchor } => {
                let target = rows.pick(anchor) - f_star / *stiffness;
                let reading = read_task(&kin, state, task);
                levels.push(MotionLevel {
                    name: task.name.clone(),
                    jacobian: kin.point_jacobian_rows(model, *body, point, rows.rows()),
                    bias: rows.pick(&kin.point_bias(*body, point)),
                    acc_des: pd_reference(&task.gains, &RefSample::hold(target), &reading.value, &reading.velocity)?,
                });
                let wp = kin.world_point(*body, point);
                expected_wrenches.push(point_force_wrench(&kin, *body, &wp, &rows.embed(f_star)));
            }
            TaskKind::ForceRigid { body, point, rows, f_star, .. } => {
                contact = Some(ContactConstraint {
                    name: task.name.clone(),
                    jacobian: kin.point_jacobian_rows(model, *body, point, rows.rows()),
                    bias: rows.pick(&kin.point_bias(*body, point)),
                    f_star: f_star.clone(),
                });
            }
            TaskKind::Postural { q_p } => {
                posture_acc = Some(postural_reference(&task.gains.kp, &task.gains.kd, q_p, &state.q, &state.qd)?);
            }
        }
    }
    let posture_acc = posture_acc.ok_or_else(|| Error::InvalidHierarchy("missing postural task".into()))?;
    Ok(HierarchyInput { model, state, kin, levels, contact, posture_acc, expected_wrenches, pinv, weight })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn pd_zero_error_passes_feedforward() {
        let r = RefSample { x: dv(&[1.0, 2.0]), xd: dv(&[0.5, -0.5]), xdd: dv(&[3.0, 4.0]) };
        let out = pd_reference(&PDGains::default(), &r, &r.x, &r.xd).unwrap();
        assert_eq!(out, r.xdd);
    }

    #[test]
    fn pd_scalar_step() {
        let r = RefSample { x: dv(&[1.0]), xd: dv(&[0.0]), xdd: dv(&[0.0]) };
        let out = pd_reference(&PDGains::default(), &r, &dv(&[0.0]), &dv(&[0.0])).unwrap();
        assert_eq!(out[0], 10.0);
    }

    #[test]
    fn pd_matches_formula_and_is_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let kp = DMatrix::from_diagonal(&dv(&[3.0, 7.0, 11.0]));
        let a = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let kd = &a * a.transpose() + DMatrix::identity(3, 3);
        let gains = PDGains { kp: Gain::Full(kp.clone()), kd: Gain::Full(kd.clone()) };
        let rv = |rng: &mut ChaCha8Rng| DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
        for _ in 0..20 {
            let r = RefSample { x: rv(&mut rng), xd: rv(&mut rng), xdd: rv(&mut rng) };
            let (x, xd) = (rv(&mut rng), rv(&mut rng));
            let out = pd_reference(&gains, &r, &x, &xd).unwrap();
            let direct = &r.xdd + &kd * (&r.xd - &xd) + &kp * (&r.x - &x);
            assert!((&out - direct).amax() < 1e-14);
            // superposition in the error arguments
            let (x2, xd2) = (rv(&mut rng), rv(&mut rng));
            let zero_ref = RefSample { x: DVector::zeros(3), xd: DVector::zeros(3), xdd: DVector::zeros(3) };
            let a1 = pd_reference(&gains, &zero_ref, &x, &xd).unwrap();
            let a2 = pd_reference(&gains, &zero_ref, &x2, &xd2).unwrap();
            let a12 = pd_reference(&gains, &zero_ref, &(&x + &x2), &(&xd + &xd2)).unwrap();
            assert!((a12 - a1 - a2).amax() < 1e-12);
        }
    }

    #[test]
    fn postural_examples() {
        let q = dv(&[0.1, 0.2, 0.3]);
        let z = postural_reference(&Gain::Scalar(10.0), &Gain::Scalar(5.0), &q, &q, &DVector::zeros(3)).unwrap();
        assert_eq!(z, DVector::zeros(3));
        let out = postural_reference(&Gain::Scalar(10.0), &Gain::Scalar(5.0), &(&q + dv(&[1.0, 0.0, 0.0])), &q, &DVector::zeros(3)).unwrap();
        assert!((out - dv(&[10.0, 0.0, 0.0])).amax() < 1e-14);
        let qd = dv(&[0.3, -0.2, 1.0]);
        let out = postural_reference(&Gain::Scalar(10.0), &Gain::Scalar(5.0), &q, &DVector::zeros(3), &qd).unwrap();
        assert!((out - (&q * 10.0 - &qd * 5.0)).amax() < 1e-14);
        assert!(postural_reference(&Gain::Scalar(1.0), &Gain::Scalar(1.0), &q, &dv(&[0.0]), &qd).is_err());
    }

    #[test]
    fn minjerk_fixed_point() {
        let x = dv(&[0.3, -1.0]);
        let mut s = MinJerkState::new(x.clone(), 1.0).unwrap();
        for _ in 0..500 {
            let (next, r) = minjerk_step(&s, &x, 1e-3).unwrap();
            assert!((&r.x - &x).amax() < 1e-12 && r.xd.amax() < 1e-12 && r.xdd.amax() < 1e-12);
            s = next;
        }
    }

    /// Scalar ODE p''' = ω³(u − p) − 3ω²p' − 3ωp'' integrated with tiny RK4 steps.
    fn ode_oracle(u: f64, t_end: f64, w: f64) -> [f64; 3] {
        let f = |s: [f64; 3]| [s[1], s[2], w * w * w * (u - s[0]) - 3.0 * w * w * s[1] - 3.0 * w * s[2]];
        let h = 1e-5;
        let mut s = [0.0; 3];
        let steps = (t_end / h).round() as usize;
        for _ in 0..steps {
            let add = |a: [f64; 3], b: [f64; 3], k: f64| [a[0] + k * b[0], a[1] + k * b[1], a[2] + k * b[2]];
            let k1 = f(s);
            let k2 = f(add(s, k1, h / 2.0));
            let k3 = f(add(s, k2, h / 2.0));
            let k4 = f(add(s, k3, h));
            for i in 0..3 {
                s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        s
    }

    #[test]
    fn minjerk_step_response() {
        let t = 1.0;
        let mut s = MinJerkState::new(dv(&[0.0]), t).unwrap();
        let dt = 1e-3;
        let mut out = None;
        for _ in 0..2000 {
            let (next, r) = minjerk_step(&s, &dv(&[1.0]), dt).unwrap();
            s = next;
            out = Some(r);
        }
        let r = out.unwrap();
        assert!((1.0 - r.x[0]).abs() < 0.02);
        let oracle = ode_oracle(1.0, 2.0, 6.0 / t);
        assert!((r.x[0] - oracle[0]).abs() < 1e-9);
        assert!((r.xd[0] - oracle[1]).abs() < 1e-8);
        assert!((r.xdd[0] - oracle[2]).abs() < 1e-7);
        // at one trajectory time the analytic step response is 1 − e⁻⁶(1 + 6 + 18)
        let oracle_t = ode_oracle(1.0, 1.0, 6.0);
        assert!((oracle_t[0] - (1.0 - (-6.0f64).exp() * 25.0)).abs() < 1e-9);
    }

    #[test]
    fn minjerk_velocity_is_consistent() {
        let dt = 1e-3;
        let mut s = MinJerkState::new(dv(&[0.0]), 1.0).unwrap();
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        for k in 0..1500 {
            let xd = dv(&[(k as f64 * dt * 3.0).sin()]);
            let (next, r) = minjerk_step(&s, &xd, dt).unwrap();
            xs.push(r.x[0]);
            vs.push(r.xd[0]);
            s = next;
        }
        for k in 1..xs.len() - 1 {
            let fd = (xs[k + 1] - xs[k - 1]) / (2.0 * dt);
            assert!((fd - vs[k]).abs() < 50.0 * dt * dt, "{k}: {fd} vs {}", vs[k]);
        }
    }

    #[test]
    fn minjerk_is_deterministic_and_checks_input() {
        let s = MinJerkState::new(dv(&[0.0, 1.0]), 1.0).unwrap();
        let a = minjerk_step(&s, &dv(&[1.0, 2.0]), 1e-3).unwrap();
        let b = minjerk_step(&s, &dv(&[1.0, 2.0]), 1e-3).unwrap();
        assert_eq!(a, b);
        assert!(minjerk_step(&s, &dv(&[f64::NAN, 0.0]), 1e-3).is_err());
        assert!(minjerk_step(&s, &dv(&[0.0, 0.0]), 0.5).is_err());
    }

    #[test]
    fn rmse_examples() {
        let a = dv(&[1.0, 2.0]);
        assert_eq!(rmse(&[(a.clone(), a.clone())]).unwrap(), 0.0);
        assert_eq!(rmse(&[(dv(&[3.0, 4.0]), dv(&[0.0, 0.0]))]).unwrap(), 5.0);
        let two = [(dv(&[1.0]), dv(&[0.0])), (dv(&[7.0]), dv(&[0.0]))];
        assert_eq!(rmse(&two).unwrap(), 5.0);
        assert!(rmse(&[]).is_err());
        assert_eq!(rmse_of_norms(&[1.0, 7.0]).unwrap(), 5.0);
    }

    #[test]
    fn rmse_is_permutation_invariant_and_homogeneous() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut series: Vec<_> = (0..50)
            .map(|_| (DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0)), DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0))))
            .collect();
        let base = rmse(&series).unwrap();
        series.reverse();
        assert!((rmse(&series).unwrap() - base).abs() < 1e-14);
        let scaled: Vec<_> = series.iter().map(|(x, r)| (x * 3.0, r * 3.0)).collect();
        assert!((rmse(&scaled).unwrap() - 3.0 * base).abs() < 1e-13);
    }

    #[test]
    fn hierarchy_validation() {
        let post = TaskSpec::postural(DVector::zeros(3));
        let a = TaskSpec::motion("a", 2, 0, Vector3::zeros(), Selection::all());
        let b = TaskSpec::motion("b", 2, 0, Vector3::zeros(), Selection::all());
        assert!(TaskHierarchy::new(vec![a.clone(), b, post.clone()]).is_err());
        assert!(TaskHierarchy::new(vec![a.clone()]).is_err());
        let rigid = TaskSpec {
            name: "contact".into(),
            priority: 1,
            kind: TaskKind::ForceRigid { body: 0, point: Vector3::zeros(), rows: Selection::all(), f_star: DVector::zeros(3), holonomic: true },
            gains: PDGains::default(),
        };
        let err = TaskHierarchy::new(vec![a.clone(), rigid.clone(), post.clone()]).unwrap_err();
        assert!(err.to_string().contains("highest priority"));
        let mut top = rigid.clone();
        top.priority = 5;
        let h = TaskHierarchy::new(vec![post, a, top]).unwrap();
        assert_eq!(h.tasks()[0].name, "contact");
        assert_eq!(h.tasks()[2].name, "posture");
        assert!(Selection::new(vec![0, 0]).is_err());
        assert!(Selection::new(vec![3]).is_err());
    }
}
