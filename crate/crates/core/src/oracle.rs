//! Brute-force reference solvers used as ground truth in tests.
//!
//! These take deliberately different routes from the controllers: nested
//! reparameterization for lexicographic least squares and saddle-point
//! (KKT) systems for constrained problems.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::controllers::HierarchyInput;
use crate::dynamics::{crba, rnea, LinkWrench};
use crate::error::Error;
use crate::model::{check_len, RobotModel};
use crate::numlin::svd;

/// One level of a lexicographic problem: minimize ‖A x − b‖².
#[derive(Clone, Debug, PartialEq)]
pub struct LexLevel {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl LexLevel {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Self {
        Self { a, b }
    }

    pub fn cost(&self, x: &DVector<f64>) -> f64 {
        (&self.a * x - &self.b).norm_squared()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LexSolution {
    pub x: DVector<f64>,
    /// Optimal cost of each level.
    pub costs: Vec<f64>,
    /// False when the levels leave x undetermined; `x` is then the
    /// minimum-norm optimizer.
    pub unique: bool,
}

const RANK_TOL: f64 = 1e-10;

/// Orthonormal basis of the null space of `a` (columns) and a particular
/// least-squares solution of a y = r.
fn lsq_and_null(a: &DMatrix<f64>, r: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let (m, k) = a.shape();
    if k == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    // full V: pad short-and-wide matrices with zero rows
    let padded = if m < k { a.clone().resize_vertically(k, 0.0) } else { a.clone() };
    let svd = svd(&padded);
    let (u, vt) = (&svd.u, &svd.v_t);
    let sv = &svd.singular_values;
    let tol = RANK_TOL * sv.max().max(1.0);
    let mut y = DVector::zeros(k);
    let mut null_cols = Vec::new();
    for i in 0..sv.len() {
        if sv[i] > tol {
            let ui = u.column(i);
            let coeff = (0..m).map(|row| ui[row] * r[row]).sum::<f64>() / sv[i];
            y += vt.row(i).transpose() * coeff;
        } else {
            null_cols.push(i);
        }
    }
    let null = DMatrix::from_fn(k, null_cols.len(), |row, c| vt[(null_cols[c], row)]);
    (y, null)
}

/// The joint-acceleration problem behind a controller input: the rigid
/// contact (if any), each motion level, then the posture as J = I.
pub fn hierarchy_levels(input: &HierarchyInput) -> Vec<LexLevel> {
    let n = input.dof();
    let contact = input.contact.iter().map(|c| LexLevel::new(c.jacobian.clone(), -&c.bias));
    let motion = input.levels.iter().map(|l| LexLevel::new(l.jacobian.clone(), l.target()));
    let posture = std::iter::once(LexLevel::new(DMatrix::identity(n, n), input.posture_acc.clone()));
    contact.chain(motion).chain(posture).collect()
}

/// Sequential lexicographic least squares: each level is minimized over the
/// optimizers of all previous levels.
pub fn lex_lsq(levels: &[LexLevel]) -> Result<LexSolution, Error> {
    let first = levels.first().ok_or_else(|| Error::InvalidConfig("lex_lsq needs at least one level".into()))?;
    let n = first.a.ncols();
    for lv in levels {
        if lv.a.ncols() != n {
            return Err(Error::Dimension { what: "level columns", expected: n, got: lv.a.ncols() });
        }
        check_len("level right-hand side", &lv.b, lv.a.nrows())?;
        if lv.a.iter().chain(lv.b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("lexicographic level"));
        }
    }
    // x = x0 + B y, B orthonormal
    let mut x0 = DVector::zeros(n);
    let mut basis = DMatrix::identity(n, n);
    for lv in levels {
        if basis.ncols() == 0 {
            break;
        }
        let ab = &lv.a * &basis;
        let r = &lv.b - &lv.a * &x0;
        let (y, null) = lsq_and_null(&ab, &r);
        x0 += &basis * y;
        basis = &basis * null;
    }
    let costs = levels.iter().map(|lv| lv.cost(&x0)).collect();
    Ok(LexSolution { x: x0, costs, unique: basis.ncols() == 0 })
}

/// Lexicographic comparison of cost vectors with a relative slack.
pub fn lex_leq(a: &[f64], b: &[f64], slack: f64) -> bool {
    for (x, y) in a.iter().zip(b) {
        let tol = slack * (1.0 + x.abs().max(y.abs()));
        if *x < y - tol {
            return true;
        }
        if *x > y + tol {
            return false;
        }
    }
    true
}

/// min ‖W^{-½} x‖² subject to A x = b, through the KKT system
/// [W⁻¹ Aᵀ; A 0] (x, ν) = (0, b).
pub fn eq_qp(w: &DMatrix<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, Error> {
    let n = w.nrows();
    if w.ncols() != n || a.ncols() != n {
        return Err(Error::Dimension { what: "QP matrices", expected: n, got: a.ncols() });
    }
    check_len("QP right-hand side", b, a.nrows())?;
    let w_inv = Cholesky::new(w.clone()).ok_or(Error::WeightNotSpd)?.inverse();
    let m = a.nrows();
    let mut kkt = DMatrix::zeros(n + m, n + m);
    kkt.view_mut((0, 0), (n, n)).copy_from(&w_inv);
    kkt.view_mut((0, n), (n, m)).copy_from(&a.transpose());
    kkt.view_mut((n, 0), (m, n)).copy_from(a);
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(n, m).copy_from(b);
    let sol = match kkt.clone().lu().solve(&rhs) {
        Some(s) if s.iter().all(|v| v.is_finite()) && (&kkt * &s - &rhs).amax() < 1e-10 * (1.0 + rhs.amax()) => s,
        // redundant constraint rows make the KKT matrix singular
        _ => lsq_and_null(&kkt, &rhs).0,
    };
    let x = sol.rows(0, n).into_owned();
    let residual = (a * &x - b).amax();
    if residual > 1e-8 * (1.0 + b.amax()) {
        return Err(Error::InconsistentConstraints(residual));
    }
    Ok(x)
}

/// Joint accelerations and contact force of the constrained dynamics
/// M q̈ + h − J_cᵀ f = τ, J_c q̈ = b. Without a contact this is plain
/// forward dynamics.
pub fn constrained_dynamics_kkt(
    model: &RobotModel,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    tau: &DVector<f64>,
    contact: Option<(&DMatrix<f64>, &DVector<f64>)>,
    wrenches: &[LinkWrench],
) -> Result<(DVector<f64>, DVector<f64>), Error> {
    let n = model.dof();
    check_len("tau", tau, n)?;
    let m = crba(model, q)?;
    let h = rnea(model, q, qd, &DVector::zeros(n), wrenches)?;
    let (jc, b) = match contact {
        Some((jc, b)) => {
            if jc.ncols() != n {
                return Err(Error::Dimension { what: "contact jacobian columns", expected: n, got: jc.ncols() });
            }
            check_len("constraint right-hand side", b, jc.nrows())?;
            (jc.clone(), b.clone())
        }
        None => (DMatrix::zeros(0, n), DVector::zeros(0)),
    };
    let k = jc.nrows();
    let mut kkt = DMatrix::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(&m);
    kkt.view_mut((0, n), (n, k)).copy_from(&(-jc.transpose()));
    kkt.view_mut((n, 0), (k, n)).copy_from(&jc);
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(&(tau - &h));
    rhs.rows_mut(n, k).copy_from(&b);
    let sol = kkt.clone().lu().solve(&rhs).ok_or(Error::SingularKkt)?;
    if sol.iter().any(|v| !v.is_finite()) || (&kkt * &sol - &rhs).amax() > 1e-9 * (1.0 + rhs.amax()) {
        return Err(Error::SingularKkt);
    }
    Ok((sol.rows(0, n).into_owned(), sol.rows(n, k).into_owned()))
}
