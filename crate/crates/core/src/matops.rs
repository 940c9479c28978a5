//! Symmetric eigendecomposition, PSD-cone projection and the eigenvalue-space
//! QP that pulls an adjustment matrix back into its element-wise bounds.
//!
//! The QP keeps the eigenvectors `U` of `K̂` and searches over eigenvalues
//! `d ≥ 0`:
//!
//! ```text
//! min ‖U diag(d) Uᵀ − K̂‖²_F   s.t.  B_l ≤ U diag(d) Uᵀ ≤ B_u,  d ≥ 0
//! ```
//!
//! Because `U` is orthogonal the map `A: d ↦ U diag(d) Uᵀ` is an isometry
//! (`A*A = I`), so the objective is `‖d − λ‖²` and the problem is a projection
//! of the eigenvalues `λ` onto a polyhedron. It is solved through its dual by
//! accelerated projected gradient with step `1/3` (the constraint operator
//! `[A; −A; −I]` has squared norm exactly 3), followed by an active-set polish.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvectors (columns) and eigenvalues sorted in descending order.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub vectors: DMatrix<f64>,
    pub values: DVector<f64>,
}

impl EigenPair {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        spectral_matrix(&self.vectors, &self.values)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Full spectral decomposition of `(A + Aᵀ)/2`, eigenvalues descending.
pub fn sym_eig(a: &DMatrix<f64>) -> Result<EigenPair> {
    if !a.is_square() {
        return Err(Error::Shape(format!("eigendecomposition of a {:?} matrix", a.shape())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigendecomposition input"));
    }
    let eig = SymmetricEigen::new(symmetrize(a));
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_fn(n, |k, _| eig.eigenvalues[order[k]]);
    let vectors = DMatrix::from_fn(n, n, |i, k| eig.eigenvectors[(i, order[k])]);
    Ok(EigenPair { vectors, values })
}

/// `U diag(d) Uᵀ`, symmetrized.
pub fn spectral_matrix(u: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = u.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col *= d[k];
    }
    symmetrize(&(scaled * u.transpose()))
}

/// `diag(Uᵀ M U)`: the adjoint of `d ↦ U diag(d) Uᵀ`.
fn spectral_adjoint(u: &DMatrix<f64>, m: &DMatrix<f64>) -> DVector<f64> {
    let mu = m * u;
    DVector::from_fn(u.ncols(), |k, _| u.column(k).dot(&mu.column(k)))
}

/// Projection onto the PSD cone: negative eigenvalues are set to zero.
pub fn psd_project(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eig(a)?;
    Ok(psd_from_eigen(&eig))
}

pub(crate) fn psd_from_eigen(eig: &EigenPair) -> DMatrix<f64> {
    let clamped = eig.values.map(|v| v.max(0.0));
    spectral_matrix(&eig.vectors, &clamped)
}

/// Smallest eigenvalue of the symmetric part of `a`.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> Result<f64> {
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(sym_eig(a)?.min_value())
}

/// Explicit `V ∈ R^{N×N²}` whose column for vec-index `i + N·j` holds
/// `(u_k u_kᵀ)_{ij}` for `k = 1..N`. Only meant for small `N`.
pub fn explicit_v(u: &DMatrix<f64>) -> DMatrix<f64> {
    let n = u.nrows();
    DMatrix::from_fn(n, n * n, |k, c| {
        let (i, j) = (c % n, c / n);
        u[(i, k)] * u[(j, k)]
    })
}

/// Column-stacking `vec(A)`.
pub fn vec_of(a: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(a.as_slice())
}

/// Checks `‖VVᵀ − I‖_F < 1e-8` for an orthogonal `U` by forming `V` explicitly.
pub fn verify_vvt_identity(u: &DMatrix<f64>) -> bool {
    let v = explicit_v(u);
    let n = u.nrows();
    (&v * v.transpose() - DMatrix::<f64>::identity(n, n)).norm() < 1e-8
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpConfig {
    /// KKT residual (max of primal violation and complementarity) to stop the dual solver.
    pub kkt_tol: f64,
    /// Dual iteration cap; `None` means `min(50·N², 1000)`.
    pub max_iters: Option<usize>,
    /// Element-wise slack accepted when declaring a point feasible.
    pub feasibility_tol: f64,
    /// Weight `w` on squared constraint violations in the fallback problem.
    pub penalty_weight: f64,
    /// Iteration cap of the fallback solver.
    pub fallback_max_iters: usize,
}

impl Default for QpConfig {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-8,
            max_iters: None,
            feasibility_tol: 1e-6,
            penalty_weight: 1e6,
            fallback_max_iters: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpOutcome {
    /// `K̂` already satisfied every constraint.
    AlreadyFeasible,
    /// The equality constraints determine `d` uniquely and that point is feasible.
    UniqueFeasible,
    /// The dual solver (plus polish) returned a feasible optimum.
    Solved,
    /// No feasible `d` was found; soft-penalty solve, clamp, PSD projection and clamp.
    Fallback,
}

#[derive(Debug, Clone)]
pub struct AdjustmentProjection {
    pub matrix: DMatrix<f64>,
    /// Eigenvalues `d*` chosen in the basis of `K̂`.
    pub d: DVector<f64>,
    /// Eigenvalues `λ` of `K̂`.
    pub lambda: DVector<f64>,
    pub outcome: QpOutcome,
    pub iterations: usize,
    /// Largest bound violation of `matrix`.
    pub max_violation: f64,
}

impl AdjustmentProjection {
    pub fn is_fallback(&self) -> bool {
        self.outcome == QpOutcome::Fallback
    }
}

/// Largest element-wise violation of `lower ≤ k ≤ upper` (0 when satisfied).
pub fn bound_violation(k: &DMatrix<f64>, lower: &DMatrix<f64>, upper: &DMatrix<f64>) -> f64 {
    k.iter()
        .zip(lower.iter().zip(upper.iter()))
        .map(|(&v, (&l, &u))| (l - v).max(v - u).max(0.0))
        .fold(0.0, f64::max)
}

pub fn clamp_elementwise(k: &DMatrix<f64>, lower: &DMatrix<f64>, upper: &DMatrix<f64>) -> DMatrix<f64> {
    k.zip_zip_map(lower, upper, |v, l, u| v.max(l).min(u))
}

/// Pseudo-inverse solve `x = M⁺ b` for a symmetric PSD `M`, plus its null space.
fn psd_pinv_solve(m: DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let cutoff = 1e-10 * eig.eigenvalues.amax().max(1e-300);
    let coords = eig.eigenvectors.tr_mul(b);
    let mut x = DVector::zeros(n);
    let mut null = Vec::new();
    for k in 0..n {
        if eig.eigenvalues[k] > cutoff {
            x.axpy(coords[k] / eig.eigenvalues[k], &eig.eigenvectors.column(k), 1.0);
        } else {
            null.push(eig.eigenvectors.column(k).into_owned());
        }
    }
    let basis = if null.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&null)
    };
    (x, basis)
}

/// Linear part of `z ↦ (K, d)` after eliminating the pinned entries:
/// `d = d₀ + Z z`, `K = A d₀ + Σ_l z_l A Z_l`.
enum Param {
    /// No pinned entries: `d = z`, `K = U diag(z) Uᵀ`.
    Full,
    Reduced {
        d0: DVector<f64>,
        z: DMatrix<f64>,
        k0: DMatrix<f64>,
        mats: Vec<DMatrix<f64>>,
    },
}

struct Problem<'a> {
    u: &'a DMatrix<f64>,
    lambda: &'a DVector<f64>,
    lower: &'a DMatrix<f64>,
    upper: &'a DMatrix<f64>,
    /// Entries with `B_l < B_u`; the rest hold exactly through the parametrization.
    free: DMatrix<bool>,
    param: Param,
    /// `λ` expressed in `z`-coordinates.
    z_lambda: DVector<f64>,
}

enum Reduction<'a> {
    Problem(Box<Problem<'a>>),
    Unique(DVector<f64>),
    Inconsistent,
}

impl<'a> Problem<'a> {
    fn reduce(
        u: &'a DMatrix<f64>,
        lambda: &'a DVector<f64>,
        lower: &'a DMatrix<f64>,
        upper: &'a DMatrix<f64>,
        tol: f64,
    ) -> Reduction<'a> {
        let n = lambda.len();
        let free = lower.zip_map(upper, |l, h| l < h);
        if free.iter().all(|&f| f) {
            return Reduction::Problem(Box::new(Problem {
                u,
                lambda,
                lower,
                upper,
                free,
                param: Param::Full,
                z_lambda: lambda.clone(),
            }));
        }
        let mut gram = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        let mut row = DVector::<f64>::zeros(n);
        for j in 0..n {
            for i in 0..=j {
                if free[(i, j)] {
                    continue;
                }
                for m in 0..n {
                    row[m] = u[(i, m)] * u[(j, m)];
                }
                gram.ger(1.0, &row, &row, 1.0);
                rhs.axpy(upper[(i, j)], &row, 1.0);
            }
        }
        let (d0, z) = psd_pinv_solve(gram, &rhs);
        let k0 = spectral_matrix(u, &d0);
        let residual = k0
            .iter()
            .zip(upper.iter())
            .zip(free.iter())
            .filter(|(_, &f)| !f)
            .map(|((&k, &b), _)| (k - b).abs())
            .fold(0.0, f64::max);
        if residual > tol {
            return Reduction::Inconsistent;
        }
        if z.ncols() == 0 {
            return Reduction::Unique(d0);
        }
        let mats = z.column_iter().map(|c| spectral_matrix(u, &c.into_owned())).collect();
        let z_lambda = z.tr_mul(&(lambda - &d0));
        Reduction::Problem(Box::new(Problem {
            u,
            lambda,
            lower,
            upper,
            free,
            param: Param::Reduced { d0, z, k0, mats },
            z_lambda,
        }))
    }

    fn dim(&self) -> usize {
        self.z_lambda.len()
    }

    fn forward(&self, zv: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        match &self.param {
            Param::Full => (zv.clone(), spectral_matrix(self.u, zv)),
            Param::Reduced { d0, z, k0, mats } => {
                let d = d0 + z * zv;
                let mut k = k0.clone();
                for (c, m) in zv.iter().zip(mats) {
                    for (a, b) in k.iter_mut().zip(m.iter()) {
                        *a += c * b;
                    }
                }
                (d, k)
            }
        }
    }

    /// Adjoint of the linear part applied to `(R, ν)`.
    fn adjoint(&self, r: &DMatrix<f64>, nu: &DVector<f64>) -> DVector<f64> {
        match &self.param {
            Param::Full => spectral_adjoint(self.u, r) + nu,
            Param::Reduced { z, mats, .. } => {
                let mut out = z.tr_mul(nu);
                for (o, m) in out.iter_mut().zip(mats) {
                    *o += m.dot(r);
                }
                out
            }
        }
    }

    /// Value of the linear part of `K_ij` as a row over `z`, plus the offset `K₀_ij`.
    fn k_row(&self, i: usize, j: usize, row: &mut DVector<f64>) -> f64 {
        match &self.param {
            Param::Full => {
                for m in 0..row.len() {
                    row[m] = self.u[(i, m)] * self.u[(j, m)];
                }
                0.0
            }
            Param::Reduced { k0, mats, .. } => {
                for (r, m) in row.iter_mut().zip(mats) {
                    *r = m[(i, j)];
                }
                k0[(i, j)]
            }
        }
    }

    fn d_row(&self, m: usize, row: &mut DVector<f64>) -> f64 {
        match &self.param {
            Param::Full => {
                row.fill(0.0);
                row[m] = 1.0;
                0.0
            }
            Param::Reduced { d0, z, .. } => {
                row.copy_from(&z.row(m).transpose());
                d0[m]
            }
        }
    }

    fn violation_of(&self, d: &DVector<f64>, k: &DMatrix<f64>) -> f64 {
        let neg = d.iter().map(|&v| (-v).max(0.0)).fold(0.0, f64::max);
        neg.max(bound_violation(k, self.lower, self.upper))
    }

    fn objective(&self, zv: &DVector<f64>) -> f64 {
        (zv - &self.z_lambda).norm_squared()
    }

    /// Largest `½‖z − z_λ‖²` over feasible points: `‖K‖_F ≤ ‖max(|B_l|, |B_u|)‖_F`
    /// and `‖d‖ = ‖K‖_F`. A dual value above it certifies infeasibility.
    fn primal_bound(&self) -> f64 {
        let beta = self.lower.zip_map(self.upper, |l, u| l.abs().max(u.abs())).norm();
        let d0 = match &self.param {
            Param::Full => 0.0,
            Param::Reduced { d0, .. } => d0.norm(),
        };
        0.5 * (beta + d0 + self.z_lambda.norm()).powi(2)
    }

    fn dual_value(&self, zv: &DVector<f64>, d: &DVector<f64>, k: &DMatrix<f64>, run: &DualState) -> f64 {
        let mut q = 0.5 * self.objective(zv) - run.nu.dot(d);
        for idx in 0..k.len() {
            if self.free[idx] {
                q += run.p[idx] * (k[idx] - self.upper[idx]) + run.q[idx] * (self.lower[idx] - k[idx]);
            }
        }
        q
    }

    fn primal_of(&self, st: &DualState) -> (DVector<f64>, DVector<f64>, DMatrix<f64>) {
        let zv = &self.z_lambda + self.adjoint(&(&st.q - &st.p), &st.nu);
        let (d, k) = self.forward(&zv);
        (zv, d, k)
    }

    fn kkt_residual(&self, d: &DVector<f64>, k: &DMatrix<f64>, st: &DualState) -> f64 {
        let mut res = self.violation_of(d, k);
        for idx in 0..k.len() {
            if self.free[idx] {
                let (v, l, u) = (k[idx], self.lower[idx], self.upper[idx]);
                res = res.max((st.p[idx] * (v - u)).abs()).max((st.q[idx] * (l - v)).abs());
            }
        }
        for (m, v) in st.nu.iter().zip(d.iter()) {
            res = res.max((m * v).abs());
        }
        res
    }

    /// Exact solution for a one-dimensional reduced problem: every constraint
    /// is an interval on the scalar `z`, so the optimum clamps `z_λ` into their
    /// intersection. `None` when the intersection is empty.
    fn solve_interval(&self, tol: f64) -> Option<DVector<f64>> {
        let n = self.lambda.len();
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut row = DVector::<f64>::zeros(1);
        let mut constrain = |a: f64, b: f64| -> bool {
            // a·z ≤ b
            if a.abs() <= 1e-14 {
                return b >= -tol;
            }
            if a > 0.0 {
                hi = hi.min(b / a);
            } else {
                lo = lo.max(b / a);
            }
            true
        };
        for j in 0..n {
            for i in 0..=j {
                if !self.free[(i, j)] {
                    continue;
                }
                let offset = self.k_row(i, j, &mut row);
                let a = row[0];
                if !constrain(a, self.upper[(i, j)] - offset) || !constrain(-a, offset - self.lower[(i, j)]) {
                    return None;
                }
            }
        }
        for m in 0..n {
            let offset = self.d_row(m, &mut row);
            if !constrain(-row[0], offset) {
                return None;
            }
        }
        if lo > hi {
            if lo - hi > tol {
                return None;
            }
            let mid = 0.5 * (lo + hi);
            return Some(DVector::from_element(1, mid));
        }
        Some(DVector::from_element(1, self.z_lambda[0].clamp(lo, hi)))
    }

    /// Dual accelerated projected gradient with step `1/3` and adaptive restart.
    fn solve_dual(&self, tol: f64, max_iters: usize) -> DualRun {
        let n = self.lambda.len();
        let step = 1.0 / 3.0;
        let bound = self.primal_bound();
        let mut cur = DualState::zeros(n);
        let mut prev = cur.clone();
        let mut theta = 1.0_f64;
        let mut status = DualStatus::IterationCap;
        let mut iters = 0;
        while iters < max_iters {
            iters += 1;
            let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            let y = cur.extrapolate(&prev, (theta - 1.0) / theta_next);
            let (_, dy, ky) = self.primal_of(&y);
            let free = &self.free;
            let mut next = DualState {
                p: (&y.p + (&ky - self.upper) * step).map(|v| v.max(0.0)),
                q: (&y.q + (self.lower - &ky) * step).map(|v| v.max(0.0)),
                nu: (&y.nu - &dy * step).map(|v| v.max(0.0)),
            };
            for idx in 0..free.len() {
                if !free[idx] {
                    next.p[idx] = 0.0;
                    next.q[idx] = 0.0;
                }
            }
            // Drop momentum when it points against the gradient step.
            let align = y.sub(&next).dot(&next.sub(&cur));
            prev = std::mem::replace(&mut cur, next);
            theta = if align > 0.0 { 1.0 } else { theta_next };
            if iters % 10 == 0 || iters == max_iters {
                let (zv, d, k) = self.primal_of(&cur);
                if self.kkt_residual(&d, &k, &cur) <= tol {
                    status = DualStatus::Converged;
                    break;
                }
                if self.dual_value(&zv, &d, &k, &cur) > bound {
                    status = DualStatus::Infeasible;
                    break;
                }
            }
        }
        let (z, d, _) = self.primal_of(&cur);
        DualRun {
            z,
            d,
            state: cur,
            iterations: iters,
            status,
        }
    }

    /// Projects `z_λ` onto the affine set of the constraints judged active at the dual solution.
    fn polish(&self, run: &DualRun) -> DVector<f64> {
        let n = self.lambda.len();
        let dim = self.dim();
        let k = self.forward(&run.z).1;
        let active_tol = 1e-7;
        let mut gram = DMatrix::<f64>::zeros(dim, dim);
        let mut rhs = DVector::<f64>::zeros(dim);
        let mut row = DVector::<f64>::zeros(dim);
        for j in 0..n {
            for i in 0..=j {
                if !self.free[(i, j)] {
                    continue;
                }
                let st = &run.state;
                let upper_active =
                    st.p[(i, j)] + st.p[(j, i)] > 1e-10 || (k[(i, j)] - self.upper[(i, j)]).abs() < active_tol;
                let lower_active =
                    st.q[(i, j)] + st.q[(j, i)] > 1e-10 || (k[(i, j)] - self.lower[(i, j)]).abs() < active_tol;
                if !(upper_active || lower_active) {
                    continue;
                }
                let offset = self.k_row(i, j, &mut row);
                for bound in [
                    upper_active.then(|| self.upper[(i, j)]),
                    lower_active.then(|| self.lower[(i, j)]),
                ]
                .into_iter()
                .flatten()
                {
                    gram.ger(1.0, &row, &row, 1.0);
                    rhs.axpy(bound - offset, &row, 1.0);
                }
            }
        }
        for m in 0..n {
            if run.state.nu[m] > 1e-10 || run.d[m].abs() < active_tol {
                let offset = self.d_row(m, &mut row);
                gram.ger(1.0, &row, &row, 1.0);
                rhs.axpy(-offset, &row, 1.0);
            }
        }
        // z = z_λ − (GᵀG)⁺(GᵀG z_λ − Gᵀh)
        let residual = &gram * &self.z_lambda - rhs;
        let (shift, _) = psd_pinv_solve(gram, &residual);
        &self.z_lambda - shift
    }

    /// Minimizes `‖d − λ‖² + w‖viol(U diag(d) Uᵀ)‖²` over `d ≥ 0` in the full eigenvalue space.
    fn solve_penalized(&self, hat_k: &DMatrix<f64>, weight: f64, max_iters: usize) -> (DVector<f64>, usize) {
        let clamped = clamp_elementwise(hat_k, self.lower, self.upper);
        let mut d = spectral_adjoint(self.u, &clamped).map(|v| v.max(0.0));
        let lipschitz = 2.0 + 2.0 * weight;
        let kappa = lipschitz / 2.0;
        let beta = (kappa.sqrt() - 1.0) / (kappa.sqrt() + 1.0);
        let mut prev = d.clone();
        let mut iters = 0;
        while iters < max_iters {
            iters += 1;
            let y = &d + (&d - &prev) * beta;
            let k = spectral_matrix(self.u, &y);
            let resid = k.zip_zip_map(self.lower, self.upper, |v, l, u| {
                if v > u {
                    v - u
                } else if v < l {
                    v - l
                } else {
                    0.0
                }
            });
            let grad = (&y - self.lambda) * 2.0 + spectral_adjoint(self.u, &resid) * (2.0 * weight);
            let next = (&y - grad / lipschitz).map(|v| v.max(0.0));
            let change = (&next - &d).amax();
            prev = std::mem::replace(&mut d, next);
            if change <= 1e-13 * (1.0 + d.amax()) {
                break;
            }
        }
        (d, iters)
    }
}

#[derive(Clone)]
struct DualState {
    p: DMatrix<f64>,
    q: DMatrix<f64>,
    nu: DVector<f64>,
}

impl DualState {
    fn zeros(n: usize) -> Self {
        Self {
            p: DMatrix::zeros(n, n),
            q: DMatrix::zeros(n, n),
            nu: DVector::zeros(n),
        }
    }

    fn extrapolate(&self, prev: &Self, beta: f64) -> Self {
        Self {
            p: &self.p + (&self.p - &prev.p) * beta,
            q: &self.q + (&self.q - &prev.q) * beta,
            nu: &self.nu + (&self.nu - &prev.nu) * beta,
        }
    }

    fn sub(&self, other: &Self) -> Self {
        Self {
            p: &self.p - &other.p,
            q: &self.q - &other.q,
            nu: &self.nu - &other.nu,
        }
    }

    fn dot(&self, other: &Self) -> f64 {
        self.p.dot(&other.p) + self.q.dot(&other.q) + self.nu.dot(&other.nu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DualStatus {
    Converged,
    Infeasible,
    IterationCap,
}

struct DualRun {
    z: DVector<f64>,
    d: DVector<f64>,
    state: DualState,
    iterations: usize,
    status: DualStatus,
}

/// Projects `K̂` onto `{U diag(d) Uᵀ : d ≥ 0, B_l ≤ · ≤ B_u}` in the
/// eigenbasis of `K̂`, falling back to a penalized solve when that set is empty.
///
/// Entries with `B_l = B_u` are eliminated first: they fix `d` to an affine
/// subspace, which either is inconsistent (no feasible point), is a single
/// point, or leaves a smaller QP over its null-space coordinates.
pub fn project_adjustment(
    hat_k: &DMatrix<f64>,
    lower: &DMatrix<f64>,
    upper: &DMatrix<f64>,
    config: &QpConfig,
) -> Result<AdjustmentProjection> {
    let n = hat_k.nrows();
    if !hat_k.is_square() || lower.shape() != hat_k.shape() || upper.shape() != hat_k.shape() {
        return Err(Error::Shape(
            "adjustment and bound matrices must be square and equal-sized".into(),
        ));
    }
    if lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u)) {
        return Err(Error::InvalidArgument("lower bound exceeds upper bound".into()));
    }
    let hat_k = symmetrize(hat_k);
    let eig = sym_eig(&hat_k)?;
    let tol = config.feasibility_tol;
    let finish = |d: DVector<f64>, matrix: DMatrix<f64>, outcome, iterations| {
        let max_violation = bound_violation(&matrix, lower, upper);
        AdjustmentProjection {
            matrix,
            d,
            lambda: eig.values.clone(),
            outcome,
            iterations,
            max_violation,
        }
    };

    let initial_violation = eig
        .values
        .iter()
        .map(|&v| (-v).max(0.0))
        .fold(bound_violation(&hat_k, lower, upper), f64::max);
    if initial_violation <= config.kkt_tol {
        return Ok(finish(eig.values.clone(), hat_k.clone(), QpOutcome::AlreadyFeasible, 0));
    }

    let mut iterations = 0;
    let reduced = Problem::reduce(&eig.vectors, &eig.values, lower, upper, tol);
    let problem = match reduced {
        Reduction::Unique(d) => {
            let k = spectral_matrix(&eig.vectors, &d);
            let neg = d.iter().map(|&v| (-v).max(0.0)).fold(0.0, f64::max);
            if neg.max(bound_violation(&k, lower, upper)) <= tol {
                return Ok(finish(d, k, QpOutcome::UniqueFeasible, 0));
            }
            None
        }
        Reduction::Inconsistent => None,
        Reduction::Problem(p) => Some(*p),
    };

    if let Some(problem) = problem.as_ref().filter(|p| p.dim() == 1) {
        if let Some(z) = problem.solve_interval(tol) {
            let (d, k) = problem.forward(&z);
            if problem.violation_of(&d, &k) <= tol {
                return Ok(finish(d, k, QpOutcome::Solved, 0));
            }
        }
    } else if let Some(problem) = &problem {
        let cap = config.max_iters.unwrap_or((50 * n * n).min(1000)).max(10);
        let run = problem.solve_dual(config.kkt_tol, cap);
        iterations = run.iterations;
        if run.status != DualStatus::Infeasible {
            let run_k = problem.forward(&run.z).1;
            let run_violation = problem.violation_of(&run.d, &run_k);
            let polished = problem.polish(&run);
            let (pd, pk) = problem.forward(&polished);
            let feasible = problem.violation_of(&pd, &pk) <= 1e-9;
            let run_obj = problem.objective(&run.z);
            let no_worse = problem.objective(&polished) <= run_obj + 1e-9 * (1.0 + run_obj) || run_violation > tol;
            if feasible && no_worse {
                return Ok(finish(pd, pk, QpOutcome::Solved, iterations));
            }
            if run.status == DualStatus::Converged || run_violation <= tol {
                return Ok(finish(run.d, run_k, QpOutcome::Solved, iterations));
            }
        }
    }

    let full = Problem {
        u: &eig.vectors,
        lambda: &eig.values,
        lower,
        upper,
        free: DMatrix::from_element(n, n, true),
        param: Param::Full,
        z_lambda: eig.values.clone(),
    };
    let (d, fallback_iters) = full.solve_penalized(&hat_k, config.penalty_weight, config.fallback_max_iters);
    let clamped = clamp_elementwise(&spectral_matrix(&eig.vectors, &d), lower, upper);
    let projected = psd_project(&clamped)?;
    let matrix = clamp_elementwise(&projected, lower, upper);
    Ok(finish(d, matrix, QpOutcome::Fallback, iterations + fallback_iters))
}
