//! Kernel completion by alternating updates of the multiplicative adjustment
//! `K_Δ`, the robustness perturbation `ℰ` and the dual coefficients `α`.
//!
//! The loss monitored across iterations is
//! `ℒ = 1ᵀα − ½ αᵀ Y (K_o ⊙ K_Δ ⊙ ℰ) Y α + η ‖K_Δ − 11ᵀ‖²_F`.

use nalgebra::{DMatrix, DVector};

use crate::dataset::IncompleteDataset;
use crate::error::{Error, Result};
use crate::kernels::{observed_kernel_with_bounds, BoundedKernel, KernelSpec};
use crate::matops::{self, bound_violation, project_adjustment, AdjustmentProjection, QpConfig};
use crate::svm::{self, AdamConfig, DualSolution, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Config {
    pub c: f64,
    pub eta: f64,
    pub rho: f64,
    pub max_iters: usize,
    pub loss_tol: f64,
    pub alpha_steps_per_iter: usize,
    /// `ν₀ = base_step_factor · C`; iteration `t` uses `ν₀/t`.
    pub base_step_factor: f64,
    pub adam: AdamConfig,
    /// Re-optimize `α` on the output kernel after the loop.
    pub refit_alpha: bool,
    pub refit: TrainConfig,
    pub qp: QpConfig,
}

impl Stage1Config {
    pub fn new(c: f64, eta: f64, rho: f64) -> Self {
        Self {
            c,
            eta,
            rho,
            max_iters: 200,
            loss_tol: 1.5e-5,
            alpha_steps_per_iter: 10,
            base_step_factor: 0.1,
            adam: AdamConfig::default(),
            refit_alpha: true,
            refit: TrainConfig::default(),
            qp: QpConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("C", self.c),
            ("eta", self.eta),
            ("rho", self.rho),
            ("loss_tol", self.loss_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Stage1State {
    pub k_delta: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub alpha: DVector<f64>,
    pub loss_trace: Vec<f64>,
    pub iter: usize,
}

impl Stage1State {
    /// `K_Δ = ℰ = 11ᵀ`, `α = C/2 · 1`.
    pub fn initial(n: usize, c: f64) -> Self {
        Self {
            k_delta: DMatrix::from_element(n, n, 1.0),
            e: DMatrix::from_element(n, n, 1.0),
            alpha: DVector::from_element(n, c / 2.0),
            loss_trace: Vec::new(),
            iter: 0,
        }
    }
}

/// `diag(a) M diag(a)`.
fn sandwich(a: &DVector<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| a[i] * m[(i, j)] * a[j])
}

/// Unconstrained minimizer `11ᵀ + (1/4η) diag(α⊙y)(K_o⊙ℰ)diag(α⊙y)`.
pub fn step1_unconstrained(state: &Stage1State, k_o: &DMatrix<f64>, y: &DVector<f64>, eta: f64) -> DMatrix<f64> {
    let ay = state.alpha.component_mul(y);
    sandwich(&ay, &k_o.component_mul(&state.e)).map(|v| 1.0 + v / (4.0 * eta))
}

pub fn step1_update_kdelta(
    state: &Stage1State,
    bk: &BoundedKernel,
    y: &DVector<f64>,
    config: &Stage1Config,
) -> Result<AdjustmentProjection> {
    let hat = step1_unconstrained(state, &bk.observed, y, config.eta);
    project_adjustment(&hat, &bk.lower, &bk.upper, &config.qp)
}

/// `11ᵀ − Γ/(4ρ)` with `Γ = diag(α⊙y)(K_o⊙K_Δ)diag(α⊙y)`.
pub fn step2_unconstrained(state: &Stage1State, k_o: &DMatrix<f64>, y: &DVector<f64>, rho: f64) -> DMatrix<f64> {
    let ay = state.alpha.component_mul(y);
    sandwich(&ay, &k_o.component_mul(&state.k_delta)).map(|v| 1.0 - v / (4.0 * rho))
}

pub fn step2_update_e(
    state: &Stage1State,
    bk: &BoundedKernel,
    y: &DVector<f64>,
    config: &Stage1Config,
) -> Result<DMatrix<f64>> {
    Ok(step2_with_spectrum(state, bk, y, config)?.0)
}

/// Step 2 plus the smallest eigenvalue of the result, read off the clamped
/// spectrum.
fn step2_with_spectrum(
    state: &Stage1State,
    bk: &BoundedKernel,
    y: &DVector<f64>,
    config: &Stage1Config,
) -> Result<(DMatrix<f64>, f64)> {
    let eig = matops::sym_eig(&step2_unconstrained(state, &bk.observed, y, config.rho))?;
    let min_eig = eig.min_value().max(0.0);
    Ok((matops::psd_from_eigen(&eig), min_eig))
}

pub fn effective_kernel(k_o: &DMatrix<f64>, k_delta: &DMatrix<f64>, e: &DMatrix<f64>) -> DMatrix<f64> {
    k_o.component_mul(k_delta).component_mul(e)
}

/// Adam block on `K_o⊙K_Δ⊙ℰ` with step `ν₀/t`, `t = max(state.iter, 1)`.
pub fn step3_update_alpha(
    state: &Stage1State,
    bk: &BoundedKernel,
    y: &DVector<f64>,
    config: &Stage1Config,
) -> Result<DVector<f64>> {
    let k_eff = effective_kernel(&bk.observed, &state.k_delta, &state.e);
    let t = state.iter.max(1) as f64;
    let step = config.base_step_factor * config.c / t;
    svm::ascend_alpha(
        &state.alpha,
        &k_eff,
        y,
        config.c,
        step,
        config.alpha_steps_per_iter,
        &config.adam,
    )
}

pub fn stage1_loss(
    k_o: &DMatrix<f64>,
    k_delta: &DMatrix<f64>,
    e: &DMatrix<f64>,
    alpha: &DVector<f64>,
    y: &DVector<f64>,
    eta: f64,
) -> f64 {
    let k_eff = effective_kernel(k_o, k_delta, e);
    svm::dual_objective(alpha, &k_eff, y) + eta * k_delta.map(|v| v - 1.0).norm_squared()
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub loss: f64,
    /// `|ℒ^(t) − ℒ^(t−1)|`; infinite on the first iteration.
    pub delta_loss: f64,
    pub min_eig_e: f64,
    pub bound_violation: f64,
    /// `‖K_Δ^(t) − K_Δ^(t−1)‖_F`.
    pub kdelta_change: f64,
    pub qp_fallback: bool,
}

#[derive(Debug, Clone)]
pub struct Stage1Result {
    /// `K̃ = K_o ⊙ K_Δ`.
    pub kernel: DMatrix<f64>,
    pub k_delta: DMatrix<f64>,
    pub e: DMatrix<f64>,
    /// Coefficients from the loop, or refit on `K̃` when enabled.
    pub solution: DualSolution,
    pub trace: Vec<IterationRecord>,
    pub converged: bool,
    pub fallback_count: usize,
    pub kernel_min_eig: f64,
    /// Largest `|yᵀα|/N` shift applied by the α projection over the run.
    pub max_alpha_shift: f64,
}

impl Stage1Result {
    pub fn loss_trace(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.loss).collect()
    }
}

pub fn run_stage1(ds: &IncompleteDataset, kernel: &KernelSpec, config: &Stage1Config) -> Result<Stage1Result> {
    let bk = observed_kernel_with_bounds(kernel, ds)?;
    run_stage1_with_bounds(&bk, ds.labels(), config)
}

/// Runs steps 1→2→3 until `|Δℒ| < loss_tol` or `max_iters`. Without
/// convergence the iterate with the smallest `|Δℒ|` is returned.
pub fn run_stage1_with_bounds(bk: &BoundedKernel, y: &DVector<f64>, config: &Stage1Config) -> Result<Stage1Result> {
    config.validate()?;
    let n = bk.n();
    if y.len() != n {
        return Err(Error::Shape(format!("{} labels for a {n}×{n} kernel", y.len())));
    }
    let mut state = Stage1State::initial(n, config.c);
    let mut prev_loss = stage1_loss(&bk.observed, &state.k_delta, &state.e, &state.alpha, y, config.eta);
    let mut trace = Vec::new();
    let mut fallback_count = 0;
    let mut converged = false;
    let mut best: Option<(f64, Stage1State)> = None;
    let mut max_alpha_shift = 0.0_f64;

    for t in 1..=config.max_iters {
        state.iter = t;
        let projection = step1_update_kdelta(&state, bk, y, config)?;
        if projection.is_fallback() {
            fallback_count += 1;
        }
        let kdelta_change = (&projection.matrix - &state.k_delta).norm();
        state.k_delta = projection.matrix;
        let (e, min_eig_e) = step2_with_spectrum(&state, bk, y, config)?;
        state.e = e;
        let new_alpha = step3_update_alpha(&state, bk, y, config)?;
        max_alpha_shift = max_alpha_shift.max(new_alpha.iter().map(|&a| (-a).max(a - config.c)).fold(0.0, f64::max));
        state.alpha = new_alpha;

        let loss = stage1_loss(&bk.observed, &state.k_delta, &state.e, &state.alpha, y, config.eta);
        if !loss.is_finite() {
            return Err(Error::NonFinite("stage I loss"));
        }
        let delta_loss = (loss - prev_loss).abs();
        prev_loss = loss;
        state.loss_trace.push(loss);
        trace.push(IterationRecord {
            iter: t,
            loss,
            delta_loss,
            min_eig_e,
            bound_violation: bound_violation(&state.k_delta, &bk.lower, &bk.upper),
            kdelta_change,
            qp_fallback: projection.outcome == matops::QpOutcome::Fallback,
        });
        if delta_loss < config.loss_tol {
            converged = true;
            break;
        }
        if best.as_ref().is_none_or(|(d, _)| delta_loss < *d) {
            best = Some((delta_loss, state.clone()));
        }
    }
    if !converged {
        if let Some((_, s)) = best {
            state = s;
        }
    }

    let kernel = bk.observed.component_mul(&state.k_delta);
    let solution = if config.refit_alpha {
        svm::train_dual_from(state.alpha.clone(), &kernel, y, config.c, &config.refit)?
    } else {
        svm::finish_solution(state.alpha.clone(), &kernel, y, config.c)
    };
    let kernel_min_eig = matops::min_eigenvalue(&kernel)?;
    Ok(Stage1Result {
        kernel,
        k_delta: state.k_delta,
        e: state.e,
        solution,
        trace,
        converged,
        fallback_count,
        kernel_min_eig,
        max_alpha_shift,
    })
}
