//! Task-space inverse dynamics.
//!
//! The hierarchy is resolved purely at the kinematic level, with orthogonal
//! projectors kept as an orthonormal basis of the claimed directions, and the
//! torque is obtained from one RNEA pass. Cost is linear in the number of
//! joints for fixed task dimensions.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::{level_diagnostics, ControlOutput, Diagnostics, HierarchyInput, NullBasis};
use crate::error::Error;
use crate::numlin::{filtered_solve, svd, FilteredSolve, weight_factor, weighted_task_pinv, weighted_truncated_pinv, PinvConfig, WeightSpec};

fn resolve_motion_levels(
    input: &HierarchyInput,
    basis: &mut NullBasis,
    qdd: &mut DVector<f64>,
    qdd_levels: &mut Vec<DVector<f64>>,
    diagnostics: &mut Diagnostics,
) {
    for level in &input.levels {
        let a = basis.restrict(&level.jacobian);
        let r = level.target() - &level.jacobian * &*qdd;
        let solve = filtered_solve(&a, &r, &input.pinv);
        // the step lies in the null space; projecting removes rounding along Z
        *qdd += basis.project(&solve.solution);
        basis.extend(&solve.row_basis);
        diagnostics.levels.push(level_diagnostics(&level.name, &solve, basis.null_dim()));
        qdd_levels.push(qdd.clone());
    }
}

fn finish_with_posture(
    input: &HierarchyInput,
    basis: &NullBasis,
    mut qdd: DVector<f64>,
    mut qdd_levels: Vec<DVector<f64>>,
    diagnostics: Diagnostics,
) -> (DVector<f64>, Vec<DVector<f64>>, Diagnostics) {
    qdd += basis.project(&input.posture_acc);
    let tau = input.inverse_dynamics(&qdd);
    qdd_levels.push(qdd);
    (tau, qdd_levels, diagnostics)
}

/// τ = RNEA(q, q̇, q̈₁ + N q̈_p*), with q̈₁ from the prioritized kinematic
/// recursion q̈ ← q̈ + (J N)⁺ (ẍ* − J̇q̇ − J q̈).
pub fn tsid_control(input: &HierarchyInput) -> Result<ControlOutput, Error> {
    let start = Instant::now();
    input.validate()?;
    if input.contact.is_some() {
        return Err(Error::InvalidHierarchy("rigid contacts require tsid_force_control".into()));
    }
    let n = input.dof();
    let mut basis = NullBasis::new(n);
    let mut qdd = DVector::zeros(n);
    let mut qdd_levels = Vec::with_capacity(input.levels.len() + 1);
    let mut diagnostics = Diagnostics::default();
    resolve_motion_levels(input, &mut basis, &mut qdd, &mut qdd_levels, &mut diagnostics);
    let (tau, qdd_levels, diagnostics) = finish_with_posture(input, &basis, qdd, qdd_levels, diagnostics);
    ControlOutput::new(tau, qdd_levels, diagnostics).finish(start)
}

/// Resolves the rigid contact first (exactly, J_c q̈ = −J̇_c q̇), then the
/// motion levels and the posture inside the contact null space.
/// τ = RNEA(q̈) − J_cᵀ f*.
pub fn tsid_force_control(input: &HierarchyInput) -> Result<ControlOutput, Error> {
    let start = Instant::now();
    input.validate()?;
    let contact = input
        .contact
        .as_ref()
        .ok_or_else(|| Error::InvalidHierarchy("tsid_force_control needs a rigid contact".into()))?;
    let n = input.dof();
    let mut basis = NullBasis::new(n);
    let mut diagnostics = Diagnostics::default();
    let b = -&contact.bias;
    let solve = constraint_solve(&contact.jacobian, &b, &input.pinv, &contact.name, &mut diagnostics.warnings);
    basis.extend(&solve.row_basis);
    diagnostics.levels.push(level_diagnostics(&contact.name, &solve, basis.null_dim()));
    let mut qdd = solve.solution;
    let mut qdd_levels = vec![qdd.clone()];
    resolve_motion_levels(input, &mut basis, &mut qdd, &mut qdd_levels, &mut diagnostics);
    let (mut tau, qdd_levels, diagnostics) = finish_with_posture(input, &basis, qdd, qdd_levels, diagnostics);
    tau -= contact.jacobian.tr_mul(&contact.f_star);
    ControlOutput::new(tau, qdd_levels, diagnostics).finish(start)
}

/// Single rigid-force law τ = M(J_c⁺ b + N_c q̈₀) + h − J_cᵀ f*, assembled
/// by RNEA. The contact level is solved without damping so that the
/// constraint, and hence the contact force, is exact.
pub fn tsid_rigid_force_single(input: &HierarchyInput, b: &DVector<f64>, qdd0: &DVector<f64>) -> Result<ControlOutput, Error> {
    let start = Instant::now();
    input.validate()?;
    let contact = input
        .contact
        .as_ref()
        .ok_or_else(|| Error::InvalidHierarchy("rigid force control needs a contact".into()))?;
    let n = input.dof();
    if b.len() != contact.jacobian.nrows() {
        return Err(Error::Dimension { what: "constraint right-hand side", expected: contact.jacobian.nrows(), got: b.len() });
    }
    if qdd0.len() != n {
        return Err(Error::Dimension { what: "null-space acceleration", expected: n, got: qdd0.len() });
    }
    let mut diagnostics = Diagnostics::default();
    let solve = constraint_solve(&contact.jacobian, b, &input.pinv, &contact.name, &mut diagnostics.warnings);
    let mut basis = NullBasis::new(n);
    basis.extend(&solve.row_basis);
    diagnostics.levels.push(level_diagnostics(&contact.name, &solve, basis.null_dim()));
    let qdd = solve.solution + basis.project(qdd0);
    let tau = input.inverse_dynamics(&qdd) - contact.jacobian.tr_mul(&contact.f_star);
    ControlOutput::new(tau, vec![qdd], diagnostics).finish(start)
}

/// Undamped J_c⁺ b and the row basis of J_c. Falls back to the damped task
/// filter, with a warning, if J_c loses rank.
fn constraint_solve(
    jc: &DMatrix<f64>,
    b: &DVector<f64>,
    cfg: &PinvConfig,
    name: &str,
    warnings: &mut Vec<String>,
) -> FilteredSolve {
    let exact = PinvConfig { lambda: 0.0, ..*cfg };
    let mut solve = filtered_solve(jc, b, &exact);
    if solve.rank() < jc.nrows() {
        warnings.push(format!(
            "contact `{name}` is rank deficient (rank {} of {}); using damped resolution",
            solve.rank(),
            jc.nrows()
        ));
        solve = filtered_solve(jc, b, cfg);
    }
    solve
}

/// General-metric form: every level, the posture included as J₀ = I,
/// is resolved with W-weighted pseudoinverses and oblique projectors,
/// q̈ ← q̈ + N (J N)⁺_W (ẍ* − J̇q̇ − J q̈), τ = RNEA(q̈).
///
/// With the posture present the result does not depend on W (λ = 0); this
/// dense O(n³) variant exists to cross-check that. Mass-based metrics are
/// rejected since this controller never forms M.
pub fn tsid_control_weighted(input: &HierarchyInput) -> Result<ControlOutput, Error> {
    let start = Instant::now();
    input.validate()?;
    if input.weight.needs_mass() {
        return Err(Error::InvalidConfig("weighted TSID accepts only explicit weights".into()));
    }
    if input.contact.is_some() {
        return Err(Error::InvalidHierarchy("rigid contacts require tsid_force_control".into()));
    }
    let n = input.dof();
    let w = input.weight.resolve(n, None)?;
    let l = weight_factor(&w)?;
    let mut proj = DMatrix::<f64>::identity(n, n);
    let mut qdd = DVector::zeros(n);
    let mut qdd_levels = Vec::with_capacity(input.levels.len() + 1);
    let mut diagnostics = Diagnostics::default();
    let identity = DMatrix::identity(n, n);
    let posture_cfg = PinvConfig { lambda: 0.0, ..input.pinv };
    let posture = (&identity, input.posture_acc.clone(), "posture", &posture_cfg);
    let levels = input.levels.iter().map(|lv| (&lv.jacobian, lv.target(), lv.name.as_str(), &input.pinv)).chain(std::iter::once(posture));
    for (j, target, name, cfg) in levels {
        let a = j * &proj;
        let p = weighted_task_pinv(&a, &l, cfg);
        qdd += &proj * (&p.pinv * (target - j * &qdd));
        proj = &proj - weighted_truncated_pinv(&a, &l, input.pinv.sigma_min) * &a;
        let null_dim = svd(&proj).singular_values.iter().filter(|&&s| s > 1e-9).count();
        diagnostics.levels.push(super::LevelDiagnostics { name: name.into(), min_sv: p.min_sv, max_sv: p.max_sv, rank: p.rank, null_dim });
        qdd_levels.push(qdd.clone());
    }
    let tau = input.inverse_dynamics(&qdd);
    ControlOutput::new(tau, qdd_levels, diagnostics).finish(start)
}

/// Convenience used by tests: weighted TSID with an explicit metric.
pub fn with_weight<'a>(input: &HierarchyInput<'a>, w: DMatrix<f64>) -> HierarchyInput<'a> {
    let mut out = input.clone();
    out.weight = WeightSpec::Explicit(w);
    out
}
