//! Dual soft-margin SVM: objective, projected Adam ascent, bias recovery and
//! prediction.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct DualSolution {
    pub alpha: DVector<f64>,
    pub bias: f64,
    pub objective: f64,
    pub support_indices: Vec<usize>,
    /// Set when the bias could not be recovered from support vectors.
    pub warning: Option<String>,
}

/// `1ᵀα − ½ αᵀ diag(y) K diag(y) α`.
pub fn dual_objective(alpha: &DVector<f64>, k: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let ay = alpha.component_mul(y);
    alpha.sum() - 0.5 * ay.dot(&(k * &ay))
}

/// `1 − diag(y) K diag(y) α`.
pub fn dual_gradient(alpha: &DVector<f64>, k: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let ay = alpha.component_mul(y);
    let kay = k * ay;
    DVector::from_fn(alpha.len(), |i, _| 1.0 - y[i] * kay[i])
}

/// Clips to `[0, C]`, then removes the component along `y` so that `yᵀα = 0`.
/// The second step may move entries outside `[0, C]` by up to `|yᵀα̂|/N`.
pub fn project_alpha(alpha_hat: &DVector<f64>, y: &DVector<f64>, c: f64) -> DVector<f64> {
    let clipped = alpha_hat.map(|a| a.clamp(0.0, c));
    let n = clipped.len();
    if n == 0 {
        return clipped;
    }
    let shift = y.dot(&clipped) / n as f64;
    clipped - y * shift
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// `n_steps` Adam ascent steps of size `step` on the dual objective followed
/// by one `project_alpha`. Moment estimates start from zero on every call.
pub fn ascend_alpha(
    alpha: &DVector<f64>,
    k: &DMatrix<f64>,
    y: &DVector<f64>,
    c: f64,
    step: f64,
    n_steps: usize,
    adam: &AdamConfig,
) -> Result<DVector<f64>> {
    let n = alpha.len();
    if k.shape() != (n, n) || y.len() != n {
        return Err(Error::Shape(format!("alpha of length {n} with kernel {:?}", k.shape())));
    }
    if n_steps == 0 {
        return Ok(alpha.clone());
    }
    let mut a = alpha.clone();
    let mut m = DVector::<f64>::zeros(n);
    let mut v = DVector::<f64>::zeros(n);
    for t in 1..=n_steps {
        let g = dual_gradient(&a, k, y);
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("dual gradient"));
        }
        m = &m * adam.beta1 + &g * (1.0 - adam.beta1);
        v = &v * adam.beta2 + g.map(|x| x * x) * (1.0 - adam.beta2);
        let m_corr = 1.0 - adam.beta1.powi(t as i32);
        let v_corr = 1.0 - adam.beta2.powi(t as i32);
        for i in 0..n {
            a[i] += step * (m[i] / m_corr) / ((v[i] / v_corr).sqrt() + adam.epsilon);
        }
    }
    Ok(project_alpha(&a, y, c))
}

/// Recovers `b` from the KKT conditions. Margin support vectors are averaged;
/// otherwise the midpoint of the interval allowed by all points is used.
pub fn recover_bias(alpha: &DVector<f64>, k: &DMatrix<f64>, y: &DVector<f64>, c: f64) -> (f64, Option<String>) {
    let tol = 1e-6 * c;
    let f = k * alpha.component_mul(y);
    let margin: Vec<usize> = (0..alpha.len())
        .filter(|&i| alpha[i] > tol && alpha[i] < c - tol)
        .collect();
    if !margin.is_empty() {
        let b = margin.iter().map(|&i| y[i] - f[i]).sum::<f64>() / margin.len() as f64;
        return (b, None);
    }
    if alpha.iter().all(|&a| a <= tol) {
        return (0.0, Some("no support vectors; bias set to 0".into()));
    }
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for i in 0..alpha.len() {
        // alpha_i = 0 needs y_i(f_i + b) >= 1; alpha_i = C needs y_i(f_i + b) <= 1.
        let at_upper = alpha[i] >= c - tol;
        let edge = y[i] - f[i];
        if (y[i] > 0.0) != at_upper {
            lo = lo.max(edge);
        } else {
            hi = hi.min(edge);
        }
    }
    let b = match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo,
        (false, true) => hi,
        (false, false) => 0.0,
    };
    (b, None)
}

/// `sign(Σ_i α_i y_i K_im + b)` with `sign(0) = +1`.
pub fn predict(alpha: &DVector<f64>, bias: f64, y: &DVector<f64>, cross_k: &DMatrix<f64>) -> Result<DVector<f64>> {
    if cross_k.nrows() != alpha.len() || y.len() != alpha.len() {
        return Err(Error::Shape(format!(
            "cross kernel {:?} with {} coefficients",
            cross_k.shape(),
            alpha.len()
        )));
    }
    let scores = cross_k.tr_mul(&alpha.component_mul(y)).add_scalar(bias);
    Ok(scores.map(|s| if s >= 0.0 { 1.0 } else { -1.0 }))
}

/// Schedule for a full dual solve: `blocks` rounds of `steps_per_block` Adam
/// steps at size `base_step/t` for round `t`, projecting after each round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub blocks: usize,
    pub steps_per_block: usize,
    /// Base step as a multiple of `C`.
    pub base_step_factor: f64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            blocks: 20,
            steps_per_block: 10,
            base_step_factor: 0.1,
            adam: AdamConfig::default(),
        }
    }
}

pub fn finish_solution(alpha: DVector<f64>, k: &DMatrix<f64>, y: &DVector<f64>, c: f64) -> DualSolution {
    let (bias, warning) = recover_bias(&alpha, k, y, c);
    let objective = dual_objective(&alpha, k, y);
    let tol = 1e-6 * c;
    let support_indices = (0..alpha.len()).filter(|&i| alpha[i] > tol).collect();
    DualSolution {
        alpha,
        bias,
        objective,
        support_indices,
        warning,
    }
}

/// Trains from `α = C/2·1`.
pub fn train_dual(k: &DMatrix<f64>, y: &DVector<f64>, c: f64, config: &TrainConfig) -> Result<DualSolution> {
    let start = DVector::from_element(y.len(), c / 2.0);
    train_dual_from(start, k, y, c, config)
}

pub fn train_dual_from(
    start: DVector<f64>,
    k: &DMatrix<f64>,
    y: &DVector<f64>,
    c: f64,
    config: &TrainConfig,
) -> Result<DualSolution> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("C must be positive, got {c}")));
    }
    let mut alpha = project_alpha(&start, y, c);
    for t in 1..=config.blocks {
        let step = config.base_step_factor * c / t as f64;
        alpha = ascend_alpha(&alpha, k, y, c, step, config.steps_per_block, &config.adam)?;
    }
    Ok(finish_solution(alpha, k, y, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::rng_from_seed;
    use rand::Rng;

    fn random_instance(n: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        let mut rng = rng_from_seed(seed);
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let k = &b * b.transpose() + DMatrix::identity(n, n) * 0.1;
        let y = DVector::from_fn(n, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
        let alpha = DVector::from_fn(n, |_, _| rng.random_range(0.0..2.0));
        (k, y, alpha)
    }

    #[test]
    fn objective_examples() {
        let k = DMatrix::from_element(1, 1, 1.0);
        let y = DVector::from_element(1, 1.0);
        assert_eq!(dual_objective(&DVector::zeros(1), &k, &y), 0.0);
        assert_eq!(dual_objective(&DVector::from_element(1, 2.0), &k, &y), 0.0);
    }

    #[test]
    fn objective_matches_double_loop() {
        for seed in 0..5 {
            let (k, y, a) = random_instance(6, seed);
            let mut naive = a.sum();
            for i in 0..6 {
                for j in 0..6 {
                    naive -= 0.5 * a[i] * a[j] * y[i] * y[j] * k[(i, j)];
                }
            }
            assert!((dual_objective(&a, &k, &y) - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        for seed in 0..20 {
            let n = 2 + (seed as usize % 7);
            let (k, y, a) = random_instance(n, 100 + seed);
            let g = dual_gradient(&a, &k, &y);
            let h = 1e-5;
            for i in 0..n {
                let mut up = a.clone();
                let mut dn = a.clone();
                up[i] += h;
                dn[i] -= h;
                let fd = (dual_objective(&up, &k, &y) - dual_objective(&dn, &k, &y)) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1.0), "{fd} vs {}", g[i]);
            }
        }
        let (k, y, _) = random_instance(3, 7);
        assert_eq!(dual_gradient(&DVector::zeros(3), &k, &y), DVector::from_element(3, 1.0));
    }

    #[test]
    fn project_alpha_examples() {
        let y = DVector::from_column_slice(&[1.0, -1.0]);
        let c = 2.0;
        let out = project_alpha(&DVector::from_column_slice(&[c + 1.0, 0.0]), &y, c);
        assert_eq!(out.as_slice(), &[1.0, 1.0]);
        let fixed = DVector::from_column_slice(&[0.5, 0.5]);
        assert_eq!(project_alpha(&fixed, &y, c), fixed);
        assert_eq!(project_alpha(&DVector::zeros(2), &y, c), DVector::zeros(2));
    }

    #[test]
    fn ascent_does_not_lose_objective_on_concave_instances() {
        for seed in 0..10 {
            let (k, _, _) = random_instance(3, 200 + seed);
            let y = DVector::from_column_slice(&[1.0, -1.0, 1.0]);
            let c = 1.0;
            let start = project_alpha(&DVector::from_element(3, c / 2.0), &y, c);
            let before = dual_objective(&start, &k, &y);
            let mut a = start;
            for t in 1..=20 {
                a = ascend_alpha(&a, &k, &y, c, 0.1 * c / t as f64, 10, &AdamConfig::default()).unwrap();
            }
            assert!(dual_objective(&a, &k, &y) >= before - 1e-12);
        }
    }

    #[test]
    fn ascent_respects_unconstrained_maximum() {
        // max of 1ᵀα − ½αᵀQα over yᵀα = 0 bounds every feasible value.
        for seed in 0..10 {
            let (k, _, _) = random_instance(3, 300 + seed);
            let y = DVector::from_column_slice(&[1.0, -1.0, 1.0]);
            let q = DMatrix::from_fn(3, 3, |i, j| y[i] * y[j] * k[(i, j)]);
            let mut kkt = DMatrix::<f64>::zeros(4, 4);
            kkt.view_mut((0, 0), (3, 3)).copy_from(&q);
            for i in 0..3 {
                kkt[(i, 3)] = y[i];
                kkt[(3, i)] = y[i];
            }
            let rhs = DVector::from_column_slice(&[1.0, 1.0, 1.0, 0.0]);
            let sol = kkt.lu().solve(&rhs).unwrap();
            let best = dual_objective(&sol.rows(0, 3).into_owned(), &k, &y);
            let a = train_dual(&k, &y, 5.0, &TrainConfig::default()).unwrap().alpha;
            assert!(dual_objective(&a, &k, &y) <= best + 1e-9);
        }
    }

    #[test]
    fn zero_steps_is_identity() {
        let (k, y, a) = random_instance(4, 1);
        assert_eq!(
            ascend_alpha(&a, &k, &y, 1.0, 0.1, 0, &AdamConfig::default()).unwrap(),
            a
        );
    }

    #[test]
    fn bias_examples() {
        // Linear kernel on x = ±1 is symmetric, so the bias vanishes.
        let k = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let y = DVector::from_column_slice(&[1.0, -1.0]);
        let sol = train_dual(&k, &y, 100.0, &TrainConfig::default()).unwrap();
        assert!(sol.bias.abs() < 1e-9);
        let (b, warning) = recover_bias(&DVector::zeros(2), &k, &y, 1.0);
        assert_eq!(b, 0.0);
        assert!(warning.is_some());
    }

    #[test]
    fn predict_examples() {
        let y = DVector::from_column_slice(&[1.0, -1.0]);
        let cross = DMatrix::from_element(2, 3, 0.3);
        let a = DVector::zeros(2);
        assert_eq!(predict(&a, 1.0, &y, &cross).unwrap(), DVector::from_element(3, 1.0));
        assert_eq!(predict(&a, -1.0, &y, &cross).unwrap(), DVector::from_element(3, -1.0));
        assert_eq!(predict(&a, 0.0, &y, &cross).unwrap(), DVector::from_element(3, 1.0));
    }

    #[test]
    fn separable_toy_is_fit_exactly() {
        let xs: [f64; 6] = [-2.0, -1.5, -1.0, 1.0, 1.5, 2.0];
        let y = DVector::from_fn(6, |i, _| if xs[i] < 0.0 { -1.0 } else { 1.0 });
        let k = DMatrix::from_fn(6, 6, |i, j| (-(xs[i] - xs[j]) * (xs[i] - xs[j])).exp());
        let sol = train_dual(&k, &y, 10.0, &TrainConfig::default()).unwrap();
        assert_eq!(predict(&sol.alpha, sol.bias, &y, &k).unwrap(), y);
    }
}
