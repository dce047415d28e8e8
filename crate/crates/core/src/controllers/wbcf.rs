//! Whole-Body Control Framework: operational-space forces stacked through
//! dynamically consistent projectors. Needs M and M⁻¹ explicitly.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{ControlOutput, Diagnostics, HierarchyInput, LevelDiagnostics};
use crate::dynamics::crba_with;
use crate::error::Error;
use crate::numlin::svd;

/// Per-level operational-space quantities.
#[derive(Clone, Debug)]
pub struct WBCFLevelData {
    pub name: String,
    /// Prioritized Jacobian J (I − Σ J_pⱼ⁺ J_pⱼ).
    pub jp: DMatrix<f64>,
    /// Task-space mass matrix (J_p M⁻¹ J_pᵀ)⁺.
    pub lambda: DMatrix<f64>,
    /// Operational-space force of the level.
    pub force: DVector<f64>,
}

/// Force/motion split of one level: rows with `force_rows[i]` transmit
/// `f_star[i]` directly, rows with `motion_rows[i]` track ẍ*.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridLevel {
    pub force_rows: Vec<bool>,
    pub motion_rows: Vec<bool>,
    pub f_star: DVector<f64>,
}

impl HybridLevel {
    fn validate(&self, dim: usize) -> Result<(), Error> {
        if self.force_rows.len() != dim || self.motion_rows.len() != dim || self.f_star.len() != dim {
            return Err(Error::Dimension { what: "hybrid selection", expected: dim, got: self.force_rows.len() });
        }
        for (i, (&f, &m)) in self.force_rows.iter().zip(&self.motion_rows).enumerate() {
            if f && m {
                return Err(Error::InvalidConfig(format!("row {i} is selected for both force and motion")));
            }
            if !f && !m {
                return Err(Error::InvalidConfig(format!("row {i} is selected for neither force nor motion")));
            }
        }
        Ok(())
    }
}

/// τ = Σ J_pᵢᵀ F_pᵢ with F_pᵢ = Λ_pᵢ (ẍᵢ* − J̇ᵢq̇ + Jᵢ M⁻¹ (h − Σ_{j<i} J_pⱼᵀ F_pⱼ)),
/// the posture being the last level with J = I.
pub fn wbcf_control(input: &HierarchyInput) -> Result<ControlOutput, Error> {
    wbcf_core(input, &[])
}

/// Hybrid variant: F_pᵢ = Ω_f f* + Λ_pᵢ (Ω_m ẍᵢ* − J̇ᵢq̇ + Jᵢ M⁻¹ (h − Σ)).
/// `hybrid[i]` applies to motion level `i`; missing entries are pure motion.
pub fn wbcf_hybrid_control(input: &HierarchyInput, hybrid: &[Option<HybridLevel>]) -> Result<ControlOutput, Error> {
    if hybrid.len() > input.levels.len() {
        return Err(Error::Dimension { what: "hybrid selections", expected: input.levels.len(), got: hybrid.len() });
    }
    for (sel, level) in hybrid.iter().zip(&input.levels) {
        if let Some(sel) = sel {
            sel.validate(level.dim())?;
        }
    }
    wbcf_core(input, hybrid)
}

fn wbcf_core(input: &HierarchyInput, hybrid: &[Option<HybridLevel>]) -> Result<ControlOutput, Error> {
    let start = Instant::now();
    input.validate()?;
    if input.contact.is_some() {
        return Err(Error::InvalidHierarchy("rigid contacts are not supported by this controller".into()));
    }
    let n = input.dof();
    let cfg = input.pinv;
    let m = crba_with(input.model, &input.kin);
    let m_inv = Cholesky::new(m).ok_or(Error::SingularMassMatrix)?.inverse();
    let m_inv = (&m_inv + m_inv.transpose()) * 0.5;
    // M⁻¹ = L Lᵀ
    let l = Cholesky::new(m_inv.clone()).ok_or(Error::SingularMassMatrix)?.l();
    let h = input.bias_forces();

    let identity = DMatrix::identity(n, n);
    let zero_bias = DVector::zeros(n);
    let count = input.levels.len() + 1;
    let levels = input
        .levels
        .iter()
        .map(|lv| (&lv.jacobian, &lv.acc_des, &lv.bias, lv.name.as_str()))
        .chain(std::iter::once((&identity, &input.posture_acc, &zero_bias, "posture")));

    let mut projection_sum = DMatrix::<f64>::zeros(n, n);
    let mut tau = DVector::<f64>::zeros(n);
    let mut qdd_levels = Vec::with_capacity(count);
    let mut data = Vec::with_capacity(count);
    let mut diagnostics = Diagnostics::default();
    let mut claimed = 0;
    for (idx, (j, acc_des, bias, name)) in levels.enumerate() {
        let jp = j - j * &projection_sum;
        let jl = &jp * &l;
        let (rows, cols) = jl.shape();
        let svd = svd(&jl);
        let (u, vt) = (&svd.u, &svd.v_t);
        let sv = &svd.singular_values;
        // the posture level (last) is resolved undamped
        let damping = if idx + 1 == count { 0.0 } else { cfg.lambda };
        let cutoff = cfg.sigma_min.max(sv.max() * rows.max(cols) as f64 * f64::EPSILON);
        let keep: Vec<usize> = (0..sv.len()).filter(|&k| sv[k] > cutoff).collect();

        let mut lambda = DMatrix::zeros(rows, rows);
        for &k in &keep {
            let s = sv[k];
            lambda.ger(1.0 / (s * s + damping * damping), &u.column(k), &u.column(k), 1.0);
        }

        let selection = hybrid.get(idx).and_then(|s| s.as_ref());
        let motion = match selection {
            Some(sel) => DVector::from_fn(acc_des.len(), |i, _| if sel.motion_rows[i] { acc_des[i] } else { 0.0 }),
            None => acc_des.clone(),
        };
        let x = motion - bias + j * (&m_inv * (&h - &tau));
        let mut force = &lambda * x;
        if let Some(sel) = selection {
            for i in 0..force.len() {
                if sel.force_rows[i] {
                    force[i] += sel.f_star[i];
                }
            }
        }
        tau += jp.tr_mul(&force);

        if idx + 1 < count {
            // dynamically consistent, undamped, truncated: L (J_p L)⁺ J_p
            let mut pinv = DMatrix::zeros(cols, rows);
            for &k in &keep {
                pinv.ger(1.0 / sv[k], &vt.row(k).transpose(), &u.column(k), 1.0);
            }
            projection_sum += &l * pinv * &jp;
        }
        claimed += keep.len();
        diagnostics.levels.push(LevelDiagnostics {
            name: name.to_string(),
            min_sv: keep.iter().map(|&k| sv[k]).fold(f64::INFINITY, f64::min),
            max_sv: sv.max(),
            rank: keep.len(),
            null_dim: n.saturating_sub(claimed),
        });
        qdd_levels.push(&m_inv * (&tau - &h));
        data.push(WBCFLevelData { name: name.to_string(), jp, lambda, force });
    }
    let mut out = ControlOutput::new(tau, qdd_levels, diagnostics);
    out.wbcf_levels = data;
    out.finish(start)
}
