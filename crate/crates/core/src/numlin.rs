//! Damped and weighted pseudoinverses and null-space projectors.
//!
//! SVD is the only factorization used. Task pseudoinverses are damped with the
//! singular-value filter σ/(σ²+λ²); projectors are never damped and instead
//! drop singular values at or below an absolute threshold `sigma_min`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::Error;

/// Damping and truncation settings shared by all controllers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PinvConfig {
    pub lambda: f64,
    pub sigma_min: f64,
    pub z: f64,
}

impl Default for PinvConfig {
    fn default() -> Self {
        Self { lambda: 0.02, sigma_min: 2.5e-8, z: 1e-4 }
    }
}

impl PinvConfig {
    /// Undamped configuration: exact pseudoinverses with truncation only.
    pub fn exact() -> Self {
        Self { lambda: 0.0, ..Self::default() }
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }
}

/// Violated coherence condition between damping and projector truncation.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherenceViolation {
    pub message: String,
    /// Value of σ_min / (σ_min² + λ²).
    pub gain: f64,
}

impl From<CoherenceViolation> for Error {
    fn from(v: CoherenceViolation) -> Self {
        Error::InvalidConfig(v.message)
    }
}

/// Checks `σ_min / (σ_min² + λ²) < z` (only meaningful for λ > 0), which
/// bounds the damped gain of any direction the projectors treat as null.
pub fn validate_pinv_config(cfg: &PinvConfig) -> Result<(), CoherenceViolation> {
    let fields = [("lambda", cfg.lambda), ("sigma_min", cfg.sigma_min), ("z", cfg.z)];
    for (name, v) in fields {
        if !v.is_finite() || v < 0.0 {
            return Err(CoherenceViolation { message: format!("{name} = {v} must be finite and non-negative"), gain: f64::NAN });
        }
    }
    if cfg.z <= 0.0 {
        return Err(CoherenceViolation { message: "z must be positive".into(), gain: f64::NAN });
    }
    if cfg.lambda > 0.0 {
        let gain = cfg.sigma_min / (cfg.sigma_min * cfg.sigma_min + cfg.lambda * cfg.lambda);
        if gain >= cfg.z {
            return Err(CoherenceViolation {
                message: format!(
                    "sigma_min/(sigma_min^2 + lambda^2) = {gain:e} >= z = {:e} (lambda {:e}, sigma_min {:e})",
                    cfg.z, cfg.lambda, cfg.sigma_min
                ),
                gain,
            });
        }
    }
    Ok(())
}

/// Damped inverse gain of one singular value. Never exceeds 1/(2λ).
pub fn damped_gain(sigma: f64, lambda: f64) -> f64 {
    if lambda > 0.0 {
        (sigma / (sigma * sigma + lambda * lambda)).min(0.5 / lambda)
    } else if sigma > 0.0 {
        1.0 / sigma
    } else {
        0.0
    }
}

/// Singular values an undamped inverse treats as zero: the usual
/// `max(m, n)·ε·σ_max` numerical-rank cutoff.
fn numerical_zero(sv: &DVector<f64>, rows: usize, cols: usize) -> f64 {
    sv.max() * rows.max(cols) as f64 * f64::EPSILON
}

fn check_matrix(what: &'static str, a: &DMatrix<f64>) -> Result<(), Error> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}

/// Thin singular value decomposition A = U·diag(σ)·Vᵀ with σ sorted in
/// descending order. U is m × k and Vᵀ is k × n with k = min(m, n).
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

/// SVD computed by one-sided Jacobi rotations on the triangular factor of a
/// QR decomposition.
///
/// `nalgebra::SVD` occasionally returns factors that do not reconstruct
/// rank-deficient inputs (errors of order 1e-1 were observed), which breaks
/// rank decisions and projectors. Jacobi rotations are slower per entry but
/// accurate for every singular value, and the QR step keeps the rotated
/// matrix square and small.
pub fn svd(a: &DMatrix<f64>) -> Svd {
    let (m, n) = a.shape();
    if m > n {
        let t = svd(&a.transpose());
        return Svd { u: t.v_t.transpose(), singular_values: t.singular_values, v_t: t.u.transpose() };
    }
    if m == 0 {
        return Svd { u: DMatrix::zeros(0, 0), singular_values: DVector::zeros(0), v_t: DMatrix::zeros(0, n) };
    }
    // Aᵀ = Q R, so A = Rᵀ Qᵀ and only the m × m factor Rᵀ needs an SVD.
    let (q, r) = a.transpose().qr().unpack();
    let (u, singular_values, w) = jacobi_svd(r.transpose());
    Svd { u, singular_values, v_t: w.transpose() * q.transpose() }
}

/// One-sided Jacobi SVD of a square matrix: B = U·diag(σ)·Wᵀ with σ sorted
/// in descending order.
fn jacobi_svd(mut b: DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let k = b.ncols();
    let mut w = DMatrix::<f64>::identity(k, k);
    for _sweep in 0..80 {
        let mut rotated = false;
        for i in 0..k {
            for j in i + 1..k {
                let alpha = b.column(i).norm_squared();
                let beta = b.column(j).norm_squared();
                let gamma = b.column(i).dot(&b.column(j));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut b, i, j, c, s);
                rotate_columns(&mut w, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..k).map(|c| b.column(c).norm()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let sigma = DVector::from_fn(k, |i, _| norms[order[i]]);
    let w = DMatrix::from_fn(k, k, |r, c| w[(r, order[c])]);
    // columns at roundoff level carry no direction of their own
    let floor = (k as f64 * f64::EPSILON * sigma.max()).max(f64::MIN_POSITIVE / f64::EPSILON);
    let mut u = DMatrix::zeros(k, k);
    let mut missing = Vec::new();
    for (c, &src) in order.iter().enumerate() {
        if norms[src] > floor {
            u.set_column(c, &(b.column(src) / norms[src]));
        } else {
            missing.push(c);
        }
    }
    complete_orthonormal(&mut u, &missing);
    (u, sigma, w)
}

fn rotate_columns(m: &mut DMatrix<f64>, i: usize, j: usize, c: f64, s: f64) {
    for r in 0..m.nrows() {
        let (x, y) = (m[(r, i)], m[(r, j)]);
        m[(r, i)] = c * x - s * y;
        m[(r, j)] = s * x + c * y;
    }
}

/// Fills the listed (zero) columns of `u` with unit vectors orthogonal to
/// all other columns.
fn complete_orthonormal(u: &mut DMatrix<f64>, missing: &[usize]) {
    let k = u.nrows();
    for &c in missing {
        // the basis vector with the largest residual is at least 1/sqrt(k) away
        // from the span of the columns set so far
        let mut best = DVector::<f64>::zeros(k);
        for candidate in 0..k {
            let mut v = DVector::<f64>::zeros(k);
            v[candidate] = 1.0;
            for _ in 0..2 {
                for o in 0..u.ncols() {
                    if o != c {
                        let proj = u.column(o).dot(&v);
                        v -= u.column(o) * proj;
                    }
                }
            }
            if v.norm() > best.norm() {
                best = v;
            }
        }
        let norm = best.norm();
        u.set_column(c, &(best / norm));
    }
}

impl Svd {
    pub fn recompose(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.singular_values) * &self.v_t
    }
}

/// Result of one filtered pseudoinverse, with conditioning diagnostics.
#[derive(Clone, Debug)]
pub struct PinvResult {
    pub pinv: DMatrix<f64>,
    /// Smallest singular value above the truncation threshold (∞ if none).
    pub min_sv: f64,
    pub max_sv: f64,
    pub rank: usize,
}

/// V·diag(g(σ))·Uᵀ where g is the damped filter and singular values at or
/// below `cutoff` are dropped.
fn filtered_pinv(svd: &Svd, rows: usize, cols: usize, lambda: f64, cutoff: f64) -> PinvResult {
    let (u, vt) = (&svd.u, &svd.v_t);
    let mut pinv = DMatrix::zeros(cols, rows);
    let mut min_sv = f64::INFINITY;
    let mut max_sv: f64 = 0.0;
    let mut rank = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        max_sv = max_sv.max(s);
        if s <= cutoff {
            continue;
        }
        rank += 1;
        min_sv = min_sv.min(s);
        let g = damped_gain(s, lambda);
        // pinv += g · v_k u_kᵀ
        pinv.ger(g, &vt.row(k).transpose(), &u.column(k), 1.0);
    }
    PinvResult { pinv, min_sv, max_sv, rank }
}

/// Damped pseudoinverse V·diag(σ/(σ²+λ²))·Uᵀ. With λ = 0 this is the
/// Moore–Penrose inverse, numerically-zero singular values dropped.
pub fn damped_pinv(a: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>, Error> {
    check_matrix("matrix", a)?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!("damping {lambda} must be finite and non-negative")));
    }
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return Ok(DMatrix::zeros(c, r));
    }
    let svd = svd(a);
    let cutoff = if lambda > 0.0 { 0.0 } else { numerical_zero(&svd.singular_values, r, c) };
    Ok(filtered_pinv(&svd, r, c, lambda, cutoff).pinv)
}

/// Pseudoinverse used for task resolution: damped by `cfg.lambda`, with
/// singular values at or below `cfg.sigma_min` dropped so that task
/// resolution and projectors agree on which directions are null.
pub fn task_pinv(a: &DMatrix<f64>, cfg: &PinvConfig) -> PinvResult {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return PinvResult { pinv: DMatrix::zeros(c, r), min_sv: f64::INFINITY, max_sv: 0.0, rank: 0 };
    }
    let svd = svd(a);
    let cutoff = cfg.sigma_min.max(numerical_zero(&svd.singular_values, r, c));
    filtered_pinv(&svd, r, c, cfg.lambda, cutoff)
}

/// One task-resolution step computed from a single SVD.
#[derive(Clone, Debug)]
pub struct FilteredSolve {
    /// A⁺ r with the task filter.
    pub solution: DVector<f64>,
    /// Orthonormal basis (n × rank) of the retained row space of A.
    pub row_basis: DMatrix<f64>,
    pub min_sv: f64,
    pub max_sv: f64,
}

impl FilteredSolve {
    pub fn rank(&self) -> usize {
        self.row_basis.ncols()
    }
}

/// Computes `task_pinv(a, cfg) · r` and `row_space_basis(a, cfg.sigma_min)`
/// together, without forming the pseudoinverse.
pub fn filtered_solve(a: &DMatrix<f64>, r: &DVector<f64>, cfg: &PinvConfig) -> FilteredSolve {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return FilteredSolve { solution: DVector::zeros(cols), row_basis: DMatrix::zeros(cols, 0), min_sv: f64::INFINITY, max_sv: 0.0 };
    }
    let svd = svd(a);
    let (u, vt) = (&svd.u, &svd.v_t);
    let cutoff = cfg.sigma_min.max(numerical_zero(&svd.singular_values, rows, cols));
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&k| svd.singular_values[k] > cutoff).collect();
    let mut solution = DVector::zeros(cols);
    let mut row_basis = DMatrix::zeros(cols, keep.len());
    let mut min_sv = f64::INFINITY;
    for (j, &k) in keep.iter().enumerate() {
        let s = svd.singular_values[k];
        min_sv = min_sv.min(s);
        let coeff = damped_gain(s, cfg.lambda) * u.column(k).dot(r);
        for i in 0..cols {
            row_basis[(i, j)] = vt[(k, i)];
        }
        solution.axpy(coeff, &row_basis.column(j), 1.0);
    }
    FilteredSolve { solution, row_basis, min_sv, max_sv: svd.singular_values.max() }
}

/// Metric for weighted pseudoinverses, A⁺_W = W Aᵀ (A W Aᵀ)⁺.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightSpec {
    Identity,
    Explicit(DMatrix<f64>),
    /// W = M⁻¹ (operational-space / dynamically consistent metric).
    MassInverse,
    /// W = M⁻², the metric that minimizes ‖τ‖² in the torque formulation.
    InverseMassSquared,
}

impl WeightSpec {
    pub fn needs_mass(&self) -> bool {
        matches!(self, WeightSpec::MassInverse | WeightSpec::InverseMassSquared)
    }

    /// Dense weight matrix. `mass` must be given for mass-based metrics.
    pub fn resolve(&self, n: usize, mass: Option<&DMatrix<f64>>) -> Result<DMatrix<f64>, Error> {
        let inv = || -> Result<DMatrix<f64>, Error> {
            let m = mass.ok_or_else(|| Error::InvalidConfig("mass matrix required for this weight".into()))?;
            Ok(Cholesky::new(m.clone()).ok_or(Error::SingularMassMatrix)?.inverse())
        };
        match self {
            WeightSpec::Identity => Ok(DMatrix::identity(n, n)),
            WeightSpec::Explicit(w) => {
                if w.shape() != (n, n) {
                    return Err(Error::Dimension { what: "weight matrix", expected: n, got: w.nrows() });
                }
                Ok(w.clone())
            }
            WeightSpec::MassInverse => inv(),
            WeightSpec::InverseMassSquared => {
                let mi = inv()?;
                Ok(&mi * &mi)
            }
        }
    }
}

/// Lower Cholesky factor L of an SPD weight, W = L Lᵀ.
pub fn weight_factor(w: &DMatrix<f64>) -> Result<DMatrix<f64>, Error> {
    let asym = (w - w.transpose()).amax();
    if asym > 1e-10 * (1.0 + w.amax()) {
        return Err(Error::WeightNotSpd);
    }
    Cholesky::new(w.clone()).map(|c| c.l()).ok_or(Error::WeightNotSpd)
}

/// W-weighted damped pseudoinverse `L (A L)⁺_λ` with W = L Lᵀ. Any factor
/// of W gives the same result, W Aᵀ (A W Aᵀ + λ² I)⁻¹ on the range of A.
pub fn weighted_pinv(a: &DMatrix<f64>, w: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>, Error> {
    check_matrix("matrix", a)?;
    if w.nrows() != a.ncols() {
        return Err(Error::Dimension { what: "weight matrix", expected: a.ncols(), got: w.nrows() });
    }
    let l = weight_factor(w)?;
    Ok(&l * damped_pinv(&(a * &l), lambda)?)
}

/// Weighted pseudoinverse with the task-resolution filter of `cfg`.
pub fn weighted_task_pinv(a: &DMatrix<f64>, l: &DMatrix<f64>, cfg: &PinvConfig) -> PinvResult {
    let mut r = task_pinv(&(a * l), cfg);
    r.pinv = l * r.pinv;
    r
}

/// Weighted pseudoinverse with hard truncation and no damping (projectors).
pub fn weighted_truncated_pinv(a: &DMatrix<f64>, l: &DMatrix<f64>, sigma_min: f64) -> DMatrix<f64> {
    weighted_task_pinv(a, l, &PinvConfig { lambda: 0.0, sigma_min, z: 1.0 }).pinv
}

/// Orthogonal basis (columns) of the row space of `a`, truncated at `sigma_min`.
pub fn row_space_basis(a: &DMatrix<f64>, sigma_min: f64) -> DMatrix<f64> {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, 0);
    }
    let svd = svd(a);
    let cutoff = sigma_min.max(numerical_zero(&svd.singular_values, r, c));
    let vt = svd.v_t;
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&k| svd.singular_values[k] > cutoff).collect();
    DMatrix::from_fn(c, keep.len(), |i, j| vt[(keep[j], i)])
}

/// N = I − A⁺A with A⁺ truncated at `sigma_min` and undamped.
pub fn null_projector(a: &DMatrix<f64>, sigma_min: f64) -> Result<DMatrix<f64>, Error> {
    check_matrix("matrix", a)?;
    let n = a.ncols();
    let v = row_space_basis(a, sigma_min);
    Ok(DMatrix::identity(n, n) - &v * v.transpose())
}

/// N_next = N − (J N)⁺_W J N: restricts the projector `n_prev` to the null
/// space of `j_next` as well, under the metric `w`.
pub fn recursive_projector_update(
    n_prev: &DMatrix<f64>,
    j_next: &DMatrix<f64>,
    w: &DMatrix<f64>,
    sigma_min: f64,
) -> Result<DMatrix<f64>, Error> {
    check_matrix("projector", n_prev)?;
    check_matrix("jacobian", j_next)?;
    if j_next.ncols() != n_prev.nrows() {
        return Err(Error::Dimension { what: "jacobian columns", expected: n_prev.nrows(), got: j_next.ncols() });
    }
    let l = weight_factor(w)?;
    let jn = j_next * n_prev;
    Ok(n_prev - weighted_truncated_pinv(&jn, &l, sigma_min) * jn)
}
