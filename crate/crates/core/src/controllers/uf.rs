//! Unifying Framework: each task is solved on its own and projected into
//! the null space of the higher-priority tasks.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{level_diagnostics, ControlOutput, Diagnostics, HierarchyInput, LevelDiagnostics, NullBasis};
use crate::dynamics::crba_with;
use crate::error::Error;
use crate::numlin::{filtered_solve, row_space_basis, weight_factor, weighted_task_pinv, weighted_truncated_pinv, PinvConfig, WeightSpec};

struct MassTerms {
    m: DMatrix<f64>,
    m_inv: DMatrix<f64>,
}

fn mass_terms(input: &HierarchyInput) -> Result<MassTerms, Error> {
    let m = crba_with(input.model, &input.kin);
    let m_inv = Cholesky::new(m.clone()).ok_or(Error::SingularMassMatrix)?.inverse();
    Ok(MassTerms { m, m_inv })
}

/// τ = M J⁺_W (ẍ* − J̇q̇ + J M⁻¹ h) + M N^W M⁻¹ τ₀ for a single motion task.
pub fn single_task_control(input: &HierarchyInput, tau0: &DVector<f64>) -> Result<ControlOutput, Error> {
    let start = Instant::now();
    input.validate()?;
    let n = input.dof();
    if input.levels.len() != 1 {
        return Err(Error::InvalidHierarchy(format!("single-task control needs one motion task, got {}", input.levels.len())));
    }
    if tau0.len() != n {
        return Err(Error::Dimension { what: "secondary torque", expected: n, got: tau0.len() });
    }
    let level = &input.levels[0];
    let MassTerms { m, m_inv } = mass_terms(input)?;
    let h = input.bias_forces();
    let w = input.weight.resolve(n, Some(&m))?;
    let l = weight_factor(&w)?;
    let j = &level.jacobian;
    let pinv = weighted_task_pinv(j, &l, &input.pinv);
    let null = DMatrix::identity(n, n) - weighted_truncated_pinv(j, &l, input.pinv.sigma_min) * j;
    let task_term = &pinv.pinv * (level.target() + j * (&m_inv * &h));
    let tau = &m * task_term + &m * (null * (&m_inv * tau0));
    let qdd = &m_inv * (&tau - &h);
    let diagnostics = Diagnostics {
        levels: vec![LevelDiagnostics { name: level.name.clone(), min_sv: pinv.min_sv, max_sv: pinv.max_sv, rank: pinv.rank, null_dim: n - pinv.rank }],
        ..Default::default()
    };
    ControlOutput::new(tau, vec![qdd], diagnostics).finish(start)
}

/// q̈ ← q̈ + N^W J⁺_W (ẍ* − J̇q̇) from the highest level down, the posture
/// being the lowest level with J = I; τ = M q̈ + h through RNEA.
pub fn uf_control(input: &HierarchyInput) -> Result<ControlOutput, Error> {
    let start = Instant::now();
    input.validate()?;
    if input.contact.is_some() {
        return Err(Error::InvalidHierarchy("rigid contacts require uf_hybrid_control".into()));
    }
    let (qdd_levels, diagnostics) = match input.weight {
        WeightSpec::Identity => uf_orthogonal(input),
        _ => uf_weighted(input)?,
    };
    let tau = input.inverse_dynamics(qdd_levels.last().expect("posture level"));
    ControlOutput::new(tau, qdd_levels, diagnostics).finish(start)
}

/// W = I: projectors kept as an orthonormal basis, no n × n matrices.
fn uf_orthogonal(input: &HierarchyInput) -> (Vec<DVector<f64>>, Diagnostics) {
    let n = input.dof();
    let mut basis = NullBasis::new(n);
    let mut qdd = DVector::zeros(n);
    let mut qdd_levels = Vec::with_capacity(input.levels.len() + 1);
    let mut diagnostics = Diagnostics::default();
    for level in &input.levels {
        let solve = filtered_solve(&level.jacobian, &level.target(), &input.pinv);
        qdd += basis.project(&solve.solution);
        let claimed = row_space_basis(&basis.restrict(&level.jacobian), input.pinv.sigma_min);
        basis.extend(&claimed);
        diagnostics.levels.push(level_diagnostics(&level.name, &solve, basis.null_dim()));
        qdd_levels.push(qdd.clone());
    }
    qdd += basis.project(&input.posture_acc);
    qdd_levels.push(qdd);
    (qdd_levels, diagnostics)
}

/// General metric with dense oblique projectors.
fn uf_weighted(input: &HierarchyInput) -> Result<(Vec<DVector<f64>>, Diagnostics), Error> {
    let n = input.dof();
    let mass = if input.weight.needs_mass() { Some(crba_with(input.model, &input.kin)) } else { None };
    let w = input.weight.resolve(n, mass.as_ref())?;
    let l = weight_factor(&w)?;
    let identity = DMatrix::identity(n, n);
    let mut proj = identity.clone();
    let mut qdd = DVector::zeros(n);
    let mut qdd_levels = Vec::with_capacity(input.levels.len() + 1);
    let mut diagnostics = Diagnostics::default();
    // the identity task is never singular, so posture is resolved undamped
    let posture_cfg = PinvConfig { lambda: 0.0, ..input.pinv };
    let posture = (&identity, input.posture_acc.clone(), "posture", &posture_cfg);
    let levels = input.levels.iter().map(|lv| (&lv.jacobian, lv.target(), lv.name.as_str(), &input.pinv)).chain(std::iter::once(posture));
    for (j, target, name, cfg) in levels {
        let p = weighted_task_pinv(j, &l, cfg);
        qdd += &proj * (&p.pinv * target);
        let a = j * &proj;
        proj = &proj - weighted_truncated_pinv(&a, &l, input.pinv.sigma_min) * &a;
        let null_dim = n.saturating_sub(diagnostics.levels.iter().map(|d: &LevelDiagnostics| d.rank).sum::<usize>() + p.rank);
        diagnostics.levels.push(LevelDiagnostics { name: name.into(), min_sv: p.min_sv, max_sv: p.max_sv, rank: p.rank, null_dim });
        qdd_levels.push(qdd.clone());
    }
    Ok((qdd_levels, diagnostics))
}

/// Hybrid motion/force law for one motion task and one contact:
/// τ = M J⁺_W (ẍ* − J̇q̇) + h − M N^W M⁻¹ J_cᵀ f*.
pub fn uf_hybrid_control(input: &HierarchyInput) -> Result<ControlOutput, Error> {
    let start = Instant::now();
    input.validate()?;
    let n = input.dof();
    if input.levels.len() != 1 {
        return Err(Error::InvalidHierarchy(format!("hybrid control needs one motion task, got {}", input.levels.len())));
    }
    let contact = input.contact.as_ref().ok_or_else(|| Error::InvalidHierarchy("hybrid control needs a force task".into()))?;
    let level = &input.levels[0];
    let MassTerms { m, m_inv } = mass_terms(input)?;
    let h = input.bias_forces();
    let w = input.weight.resolve(n, Some(&m))?;
    let l = weight_factor(&w)?;
    let j = &level.jacobian;
    let pinv = weighted_task_pinv(j, &l, &input.pinv);
    let null = DMatrix::identity(n, n) - weighted_truncated_pinv(j, &l, input.pinv.sigma_min) * j;
    let force_term = &m * (null * (&m_inv * contact.jacobian.tr_mul(&contact.f_star)));
    let tau = &m * (&pinv.pinv * level.target()) + &h - force_term;
    let qdd = &m_inv * (&tau - &h);
    let diagnostics = Diagnostics {
        levels: vec![LevelDiagnostics { name: level.name.clone(), min_sv: pinv.min_sv, max_sv: pinv.max_sv, rank: pinv.rank, null_dim: n - pinv.rank }],
        ..Default::default()
    };
    ControlOutput::new(tau, vec![qdd], diagnostics).finish(start)
}
