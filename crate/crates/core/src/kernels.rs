//! Decoupled kernels and the observed-part/bound decomposition.
//!
//! Every supported kernel has the form `k(x, y) = f(Σ_p g(x_p, y_p))` with a
//! bounded per-coordinate term `g` on `[0,1]²` and a monotone outer map `f`.
//! That lets a pair with missing coordinates be split into the sum over
//! jointly observed coordinates (the observed kernel `K_o`) and an interval
//! for the unknown remainder, which becomes an element-wise multiplicative
//! bound `B_l ≤ K_Δ ≤ B_u` on the adjustment factor.

use nalgebra::{DMatrix, DVector, DVectorView};
use rand::Rng;

use crate::dataset::{rng_from_seed, IncompleteDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Gaussian,
    Linear,
    Polynomial,
    Laplacian,
    Sigmoid,
    Chi2,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 6] = [
        KernelFamily::Gaussian,
        KernelFamily::Linear,
        KernelFamily::Polynomial,
        KernelFamily::Laplacian,
        KernelFamily::Sigmoid,
        KernelFamily::Chi2,
    ];

    /// Distance-type kernels: `f(s) = exp(-γ s)`, self-similarity 1.
    pub fn is_distance_type(self) -> bool {
        matches!(self, KernelFamily::Gaussian | KernelFamily::Laplacian)
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Linear => "linear",
            KernelFamily::Polynomial => "polynomial",
            KernelFamily::Laplacian => "laplacian",
            KernelFamily::Sigmoid => "sigmoid",
            KernelFamily::Chi2 => "chi2",
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelFamily::ALL
            .into_iter()
            .find(|f| {
                f.name().eq_ignore_ascii_case(s) || (s.eq_ignore_ascii_case("rbf") && *f == KernelFamily::Gaussian)
            })
            .ok_or_else(|| Error::InvalidArgument(format!("unknown kernel family {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Bandwidth for distance kernels, scale for sigmoid.
    pub gamma: f64,
    /// Offset `r` of polynomial and sigmoid kernels.
    pub offset: f64,
    pub degree: u32,
}

impl KernelSpec {
    pub fn gaussian(gamma: f64) -> Self {
        Self {
            family: KernelFamily::Gaussian,
            gamma,
            offset: 0.0,
            degree: 1,
        }
    }

    pub fn new(family: KernelFamily, gamma: f64) -> Self {
        Self {
            family,
            ..Self::gaussian(gamma)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let uses_gamma = matches!(
            self.family,
            KernelFamily::Gaussian | KernelFamily::Laplacian | KernelFamily::Sigmoid
        );
        if uses_gamma && !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kernel gamma must be positive, got {}",
                self.gamma
            )));
        }
        if self.degree < 1 {
            return Err(Error::InvalidArgument("polynomial degree must be ≥ 1".into()));
        }
        if !(self.offset >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "kernel offset must be ≥ 0, got {}",
                self.offset
            )));
        }
        Ok(())
    }

    /// Per-coordinate term `g(a, b)`.
    fn term(&self, a: f64, b: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => (a - b) * (a - b),
            KernelFamily::Laplacian => (a - b).abs(),
            KernelFamily::Linear | KernelFamily::Polynomial | KernelFamily::Sigmoid => a * b,
            KernelFamily::Chi2 => {
                let s = a + b;
                if s == 0.0 {
                    0.0
                } else {
                    2.0 * a * b / s
                }
            }
        }
    }

    /// Outer map `f` applied to the summed terms.
    fn outer(&self, s: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian | KernelFamily::Laplacian => (-self.gamma * s).exp(),
            KernelFamily::Linear | KernelFamily::Chi2 => s,
            KernelFamily::Polynomial => (s + self.offset).powi(self.degree as i32),
            KernelFamily::Sigmoid => (self.gamma * s + self.offset).tanh(),
        }
    }

    /// Range of `g(x, *)` for an unknown `* ∈ [0, 1]`.
    fn half_unknown_range(&self, x: f64) -> (f64, f64) {
        match self.family {
            KernelFamily::Gaussian => (0.0, (x * x).max((1.0 - x) * (1.0 - x))),
            KernelFamily::Laplacian => (0.0, x.max(1.0 - x)),
            KernelFamily::Linear | KernelFamily::Polynomial | KernelFamily::Sigmoid => (0.0_f64.min(x), 0.0_f64.max(x)),
            // 2x*/(x+*) is nondecreasing in * for x ≥ 0
            KernelFamily::Chi2 => (0.0, self.term(x, 1.0)),
        }
    }

    /// Range of `g(*, *')` for two independent unknowns in [0, 1]; `same`
    /// marks a sample compared with itself, where both unknowns coincide.
    fn both_unknown_range(&self, same: bool) -> (f64, f64) {
        match (self.family, same) {
            (KernelFamily::Gaussian | KernelFamily::Laplacian, true) => (0.0, 0.0),
            _ => (0.0, 1.0),
        }
    }

    pub fn value(&self, x: DVectorView<f64>, y: DVectorView<f64>) -> f64 {
        let s: f64 = x.iter().zip(y.iter()).map(|(&a, &b)| self.term(a, b)).sum();
        self.outer(s)
    }
}

/// Exact kernel value of two complete vectors.
pub fn kernel_value(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("vectors of length {} and {}", x.len(), y.len())));
    }
    Ok(spec.value(DVectorView::from(x), DVectorView::from(y)))
}

/// Gram matrix of the columns of `x`.
pub fn gram(spec: &KernelSpec, x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.ncols();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = spec.value(x.column(i), x.column(j));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Kernel between the columns of a (complete) training matrix and a test matrix.
pub fn cross_kernel(spec: &KernelSpec, train: &DMatrix<f64>, test: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if train.nrows() != test.nrows() {
        return Err(Error::Shape(format!(
            "train has {} features, test has {}",
            train.nrows(),
            test.nrows()
        )));
    }
    Ok(DMatrix::from_fn(train.ncols(), test.ncols(), |i, m| {
        spec.value(train.column(i), test.column(m))
    }))
}

/// Observed kernel and the bounds on its multiplicative adjustment.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundedKernel {
    /// `K_o`: the kernel restricted to jointly observed coordinates.
    pub observed: DMatrix<f64>,
    /// `B_l`
    pub lower: DMatrix<f64>,
    /// `B_u`
    pub upper: DMatrix<f64>,
    /// Attainable range of the true kernel value over all completions.
    pub range_lower: DMatrix<f64>,
    pub range_upper: DMatrix<f64>,
    /// Pairs with `K_o = 0`, where no multiplicative factor can express the
    /// range. Their bounds are pinned to 1; Stage I does not support them.
    pub unsupported_pairs: usize,
}

impl BoundedKernel {
    pub fn n(&self) -> usize {
        self.observed.nrows()
    }

    /// Builds a bounded kernel directly; ranges are set to `K_o ⊙ B`.
    pub fn from_parts(observed: DMatrix<f64>, lower: DMatrix<f64>, upper: DMatrix<f64>) -> Self {
        let range_lower = observed.component_mul(&lower);
        let range_upper = observed.component_mul(&upper);
        Self {
            observed,
            lower,
            upper,
            range_lower,
            range_upper,
            unsupported_pairs: 0,
        }
    }
}

/// Sum of observed terms and the interval of the unknown remainder for one pair.
fn decompose_pair(spec: &KernelSpec, ds: &IncompleteDataset, i: usize, j: usize) -> (f64, f64, f64) {
    let x = ds.values();
    let same = i == j;
    let (mut observed, mut lo, mut hi) = (0.0, 0.0, 0.0);
    for p in 0..ds.n_features() {
        let (oi, oj) = (ds.is_observed(p, i), ds.is_observed(p, j));
        let (a, b) = match (oi, oj) {
            (true, true) => {
                observed += spec.term(x[(p, i)], x[(p, j)]);
                continue;
            }
            (true, false) => spec.half_unknown_range(x[(p, i)]),
            (false, true) => spec.half_unknown_range(x[(p, j)]),
            (false, false) => spec.both_unknown_range(same),
        };
        lo += a;
        hi += b;
    }
    (observed, lo, hi)
}

/// Computes `K_o`, `B_l` and `B_u` for a dataset scaled to [0, 1].
///
/// For the Gaussian kernel `(K_o)_ij = exp(-γ D^obs_ij)` and
/// `(B_l)_ij = exp(-γ S_ij)`, `(B_u)_ij = 1`, where `S_ij` sums
/// `max{x², (1-x)²}` over coordinates observed in only one of the two samples
/// plus one per coordinate missing in both.
pub fn observed_kernel_with_bounds(spec: &KernelSpec, ds: &IncompleteDataset) -> Result<BoundedKernel> {
    spec.validate()?;
    let n = ds.n_samples();
    let mut observed = DMatrix::zeros(n, n);
    let mut lower = DMatrix::from_element(n, n, 1.0);
    let mut upper = DMatrix::from_element(n, n, 1.0);
    let mut range_lower = DMatrix::zeros(n, n);
    let mut range_upper = DMatrix::zeros(n, n);
    let mut unsupported_pairs = 0;
    for i in 0..n {
        for j in i..n {
            let (s_obs, u_lo, u_hi) = decompose_pair(spec, ds, i, j);
            let k_o = spec.outer(s_obs);
            let ends = (spec.outer(s_obs + u_lo), spec.outer(s_obs + u_hi));
            let (r_lo, r_hi) = (ends.0.min(ends.1), ends.0.max(ends.1));
            let (b_lo, b_hi) = if spec.family.is_distance_type() {
                // exp(-γ(s + u)) = K_o · exp(-γ u), independent of K_o
                ((-spec.gamma * u_hi).exp(), (-spec.gamma * u_lo).exp())
            } else if k_o > 0.0 {
                (r_lo / k_o, r_hi / k_o)
            } else {
                if u_hi > u_lo {
                    unsupported_pairs += if i == j { 1 } else { 2 };
                }
                (1.0, 1.0)
            };
            for (a, b) in [(i, j), (j, i)] {
                observed[(a, b)] = k_o;
                lower[(a, b)] = b_lo;
                upper[(a, b)] = b_hi;
                range_lower[(a, b)] = r_lo;
                range_upper[(a, b)] = r_hi;
            }
        }
    }
    Ok(BoundedKernel {
        observed,
        lower,
        upper,
        range_lower,
        range_upper,
        unsupported_pairs,
    })
}

/// Empirical kernel range over uniform random completions of the missing
/// coordinates of two distinct samples. Entries of `x`/`y` where the matching
/// mask is `false` are ignored.
pub fn attainable_range_oracle(
    spec: &KernelSpec,
    x: &[f64],
    x_mask: &[bool],
    y: &[f64],
    y_mask: &[bool],
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let d = x.len();
    if y.len() != d || x_mask.len() != d || y_mask.len() != d {
        return Err(Error::Shape("pair vectors and masks must share a length".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut a = DVector::from_column_slice(x);
    let mut b = DVector::from_column_slice(y);
    let any_missing = x_mask.iter().chain(y_mask).any(|&o| !o);
    let draws = if any_missing { n_samples.max(1) } else { 1 };
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..draws {
        for p in 0..d {
            if !x_mask[p] {
                a[p] = rng.random::<f64>();
            }
            if !y_mask[p] {
                b[p] = rng.random::<f64>();
            }
        }
        let v = spec.value(a.as_view(), b.as_view());
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok((lo, hi))
}
