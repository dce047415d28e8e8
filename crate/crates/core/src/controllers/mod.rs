//! Prioritized torque controllers.
//!
//! All controllers consume a [`HierarchyInput`]: motion levels sorted by
//! descending priority, an optional rigid contact on top and a joint-space
//! posture acceleration at the bottom.
//!
//! * [`uf`]: Unifying Framework (sound, not optimal).
//! * [`wbcf`]: Whole-Body Control Framework (sound and optimal, uses M⁻¹).
//! * [`tsid`]: task-space inverse dynamics (sound, optimal, RNEA only).

use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{rnea_with, LinkWrench};
use crate::error::Error;
use crate::kinematics::Kinematics;
use crate::model::{check_len, RobotModel, RobotState};
use crate::numlin::{FilteredSolve, PinvConfig, WeightSpec};

pub mod random;
pub mod tsid;
pub mod uf;
pub mod wbcf;

pub use tsid::{tsid_control, tsid_control_weighted, tsid_force_control, tsid_rigid_force_single};
pub use uf::{single_task_control, uf_control, uf_hybrid_control};
pub use wbcf::{wbcf_control, wbcf_hybrid_control, HybridLevel, WBCFLevelData};

/// One motion task linearized at the current state: J q̈ + J̇q̇ = ẍ*.
#[derive(Clone, Debug)]
pub struct MotionLevel {
    pub name: String,
    pub jacobian: DMatrix<f64>,
    /// J̇ q̇.
    pub bias: DVector<f64>,
    /// ẍ*.
    pub acc_des: DVector<f64>,
}

impl MotionLevel {
    pub fn dim(&self) -> usize {
        self.jacobian.nrows()
    }

    /// J q̈ + J̇ q̇.
    pub fn achieved(&self, qdd: &DVector<f64>) -> DVector<f64> {
        &self.jacobian * qdd + &self.bias
    }

    /// ẍ* − J̇ q̇.
    pub fn target(&self) -> DVector<f64> {
        &self.acc_des - &self.bias
    }
}

/// Holonomic time-invariant rigid contact, J_c q̈ = −J̇_c q̇, with the
/// desired contact force on the robot.
#[derive(Clone, Debug)]
pub struct ContactConstraint {
    pub name: String,
    pub jacobian: DMatrix<f64>,
    /// J̇_c q̇.
    pub bias: DVector<f64>,
    pub f_star: DVector<f64>,
}

/// Everything a controller needs for one evaluation.
#[derive(Clone, Debug)]
pub struct HierarchyInput<'a> {
    pub model: &'a RobotModel,
    pub state: &'a RobotState,
    /// Kinematics at `state` (with velocities).
    pub kin: Kinematics,
    /// Motion levels, highest priority first.
    pub levels: Vec<MotionLevel>,
    pub contact: Option<ContactConstraint>,
    /// q̈_p*, always the lowest level.
    pub posture_acc: DVector<f64>,
    /// Contact wrenches the controller expects the environment to apply;
    /// they are part of the bias forces h.
    pub expected_wrenches: Vec<LinkWrench>,
    pub pinv: PinvConfig,
    /// Metric of the UF pseudoinverses and of the weighted TSID variant.
    pub weight: WeightSpec,
}

impl<'a> HierarchyInput<'a> {
    pub fn new(
        model: &'a RobotModel,
        state: &'a RobotState,
        levels: Vec<MotionLevel>,
        posture_acc: DVector<f64>,
        pinv: PinvConfig,
    ) -> Result<Self, Error> {
        state.check(model.dof())?;
        let kin = Kinematics::new(model, &state.q, Some(&state.qd))?;
        Ok(Self {
            model,
            state,
            kin,
            levels,
            contact: None,
            posture_acc,
            expected_wrenches: Vec::new(),
            pinv,
            weight: WeightSpec::Identity,
        })
    }

    pub fn dof(&self) -> usize {
        self.model.dof()
    }

    pub fn validate(&self) -> Result<(), Error> {
        let n = self.dof();
        check_len("posture acceleration", &self.posture_acc, n)?;
        let all = self.levels.iter().map(|l| (&l.jacobian, &l.bias, Some(&l.acc_des)));
        let contact = self.contact.iter().map(|c| (&c.jacobian, &c.bias, Some(&c.f_star)));
        for (j, bias, other) in all.chain(contact) {
            if j.ncols() != n {
                return Err(Error::Dimension { what: "task jacobian columns", expected: n, got: j.ncols() });
            }
            check_len("task bias", bias, j.nrows())?;
            if let Some(v) = other {
                check_len("task target", v, j.nrows())?;
            }
            if j.iter().chain(bias.iter()).chain(other.into_iter().flatten()).any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("task data"));
            }
        }
        if self.posture_acc.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("posture acceleration"));
        }
        Ok(())
    }

    /// τ that realizes `qdd` under the expected contact wrenches, via RNEA.
    pub fn inverse_dynamics(&self, qdd: &DVector<f64>) -> DVector<f64> {
        rnea_with(self.model, &self.kin, &self.state.qd, qdd, &self.expected_wrenches)
    }

    /// Bias forces h (with expected contact wrenches).
    pub fn bias_forces(&self) -> DVector<f64> {
        self.inverse_dynamics(&DVector::zeros(self.dof()))
    }

    /// Copy with one more motion level appended just above the posture.
    pub fn with_level(&self, level: MotionLevel) -> Self {
        let mut out = self.clone();
        out.levels.push(level);
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelDiagnostics {
    pub name: String,
    /// Smallest singular value retained by the level's pseudoinverse.
    pub min_sv: f64,
    pub max_sv: f64,
    pub rank: usize,
    /// Dimension of the null space left for lower levels.
    pub null_dim: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub levels: Vec<LevelDiagnostics>,
    pub warnings: Vec<String>,
    pub eval_time: Duration,
}

impl Diagnostics {
    /// Smallest retained singular value over all levels.
    pub fn min_sv(&self) -> f64 {
        self.levels.iter().map(|l| l.min_sv).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug)]
pub struct ControlOutput {
    pub tau: DVector<f64>,
    /// Accumulated joint accelerations after each level (constraint level
    /// first when present, posture last).
    pub qdd_levels: Vec<DVector<f64>>,
    pub diagnostics: Diagnostics,
    /// Per-level operational-space data (WBCF only).
    pub wbcf_levels: Vec<WBCFLevelData>,
}

impl ControlOutput {
    fn new(tau: DVector<f64>, qdd_levels: Vec<DVector<f64>>, diagnostics: Diagnostics) -> Self {
        Self { tau, qdd_levels, diagnostics, wbcf_levels: Vec::new() }
    }

    /// Final commanded joint acceleration.
    pub fn qdd(&self) -> &DVector<f64> {
        self.qdd_levels.last().expect("at least the posture level")
    }

    fn finish(mut self, start: Instant) -> Result<Self, Error> {
        if self.tau.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("control torque"));
        }
        self.diagnostics.eval_time = start.elapsed();
        Ok(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ControllerKind {
    Uf,
    Wbcf,
    Tsid,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [ControllerKind::Tsid, ControllerKind::Wbcf, ControllerKind::Uf];

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::Uf => "uf",
            ControllerKind::Wbcf => "wbcf",
            ControllerKind::Tsid => "tsid",
        }
    }

    /// Evaluates the controller. TSID switches to its force variant when a
    /// rigid contact is present.
    pub fn compute(self, input: &HierarchyInput) -> Result<ControlOutput, Error> {
        match self {
            ControllerKind::Uf => uf_control(input),
            ControllerKind::Wbcf => wbcf_control(input),
            ControllerKind::Tsid if input.contact.is_some() => tsid_force_control(input),
            ControllerKind::Tsid => tsid_control(input),
        }
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uf" => Ok(ControllerKind::Uf),
            "wbcf" => Ok(ControllerKind::Wbcf),
            "tsid" => Ok(ControllerKind::Tsid),
            other => Err(Error::InvalidConfig(format!("unknown controller `{other}` (expected uf, wbcf or tsid)"))),
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Orthogonal null-space projector N = I − Z Zᵀ stored through an
/// orthonormal basis Z of the space already claimed by higher levels.
#[derive(Clone, Debug)]
pub(crate) struct NullBasis {
    z: DMatrix<f64>,
}

impl NullBasis {
    pub(crate) fn new(n: usize) -> Self {
        Self { z: DMatrix::zeros(n, 0) }
    }

    pub(crate) fn claimed(&self) -> usize {
        self.z.ncols()
    }

    pub(crate) fn null_dim(&self) -> usize {
        self.z.nrows() - self.z.ncols()
    }

    /// N v.
    pub(crate) fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.claimed() == 0 {
            return v.clone();
        }
        v - &self.z * (self.z.tr_mul(v))
    }

    /// J N.
    pub(crate) fn restrict(&self, j: &DMatrix<f64>) -> DMatrix<f64> {
        if self.claimed() == 0 {
            return j.clone();
        }
        j - (j * &self.z) * self.z.transpose()
    }

    /// Adds the columns of `basis`, which are orthonormal and orthogonal to
    /// Z up to rounding. They are projected and re-orthonormalized first:
    /// vectors from a level with small singular values carry rounding noise
    /// along Z amplified by 1/σ, which would otherwise leak lower-level
    /// motion into higher levels.
    pub(crate) fn extend(&mut self, basis: &DMatrix<f64>) {
        if basis.ncols() == 0 {
            return;
        }
        let k = self.z.ncols();
        let mut fresh = DMatrix::<f64>::zeros(self.z.nrows(), basis.ncols());
        for c in 0..basis.ncols() {
            let mut v = self.project(&basis.column(c).into_owned());
            for _ in 0..2 {
                for o in 0..c {
                    let d = fresh.column(o).dot(&v);
                    v -= fresh.column(o) * d;
                }
                v = self.project(&v);
            }
            let norm = v.norm();
            fresh.set_column(c, &(v / norm));
        }
        let z = std::mem::replace(&mut self.z, DMatrix::zeros(0, 0));
        let mut z = z.resize_horizontally(k + basis.ncols(), 0.0);
        z.columns_mut(k, basis.ncols()).copy_from(&fresh);
        self.z = z;
    }
}

pub(crate) fn level_diagnostics(name: &str, solve: &FilteredSolve, null_dim: usize) -> LevelDiagnostics {
    LevelDiagnostics { name: name.to_string(), min_sv: solve.min_sv, max_sv: solve.max_sv, rank: solve.rank(), null_dim }
}
