//! End-to-end experiment driver: mean-imputation baseline with grid search,
//! two-stage imputation, repeated evaluation and kernel-guided recovery.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dataset::{self, apply_mcar, mean_impute, rng_from_seed, IncompleteDataset, SplitSpec};
use crate::error::{Error, Result};
use crate::kernels::{cross_kernel, gram, KernelSpec};
use crate::metrics::{accuracy, imputation_errors, ErrorReport, SeparabilityReport};
use crate::stage1::{run_stage1, Stage1Config, Stage1Result};
use crate::stage2::{run_stage2, ImputationResult, Stage2Config};
use crate::svm::{self, DualSolution, TrainConfig};

/// Training sets above this size are refused unless explicitly allowed.
pub const LARGE_N: usize = 2000;

/// Powers of two `2^lo ..= 2^hi`.
pub fn power_grid(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|p| 2f64.powi(p)).collect()
}

/// How the two-stage method classifies unseen samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classifier {
    /// Coefficients from Stage I with the cross kernel of the imputed data.
    Stage1Alpha,
    /// A fresh dual solve on the Gram matrix of the imputed data.
    Retrain,
}

impl Classifier {
    pub fn name(self) -> &'static str {
        match self {
            Classifier::Stage1Alpha => "stage1",
            Classifier::Retrain => "retrain",
        }
    }
}

impl std::str::FromStr for Classifier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stage1" => Ok(Classifier::Stage1Alpha),
            "retrain" => Ok(Classifier::Retrain),
            other => Err(Error::InvalidArgument(format!("unknown classifier '{other}'"))),
        }
    }
}

/// Solver settings shared by every two-stage run; `C`, `γ`, `η` and `ρ` are
/// filled in per run.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageSettings {
    /// Replaces the default `ρ = 5C/m`.
    pub rho: Option<f64>,
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    pub svm: TrainConfig,
    pub classifier: Classifier,
}

impl Default for TwoStageSettings {
    fn default() -> Self {
        Self {
            rho: None,
            stage1: Stage1Config::new(1.0, 1.0, 1.0),
            stage2: Stage2Config::new(1.0),
            svm: TrainConfig::default(),
            classifier: Classifier::Stage1Alpha,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwoStageOutcome {
    pub c: f64,
    pub gamma: f64,
    pub eta: f64,
    pub rho: f64,
    /// Absent when the input had no missing values.
    pub stage1: Option<Stage1Result>,
    pub stage2: Option<ImputationResult>,
    pub imputed: DMatrix<f64>,
    /// Classifier trained for prediction on `imputed`.
    pub solution: DualSolution,
}

pub fn check_size(n: usize, allow_large: bool) -> Result<()> {
    if n > LARGE_N && !allow_large {
        return Err(Error::InvalidArgument(format!(
            "{n} training samples exceeds {LARGE_N}; each iteration is cubic in N (pass --allow-large to proceed)"
        )));
    }
    Ok(())
}

/// Runs Stage I then Stage II on `train` with the given `η` and, unless
/// overridden, `ρ = 5C/m`.
/// Complete data skips both stages.
pub fn two_stage(
    train: &IncompleteDataset,
    c: f64,
    gamma: f64,
    eta: f64,
    settings: &TwoStageSettings,
) -> Result<TwoStageOutcome> {
    let kernel = KernelSpec::gaussian(gamma);
    let y = train.labels();
    let m = train.missing_ratio();
    if train.is_complete() {
        let k = gram(&kernel, train.values());
        let solution = svm::train_dual(&k, y, c, &settings.svm)?;
        return Ok(TwoStageOutcome {
            c,
            gamma,
            eta,
            rho: f64::INFINITY,
            stage1: None,
            stage2: None,
            imputed: train.values().clone(),
            solution,
        });
    }
    let rho = settings.rho.unwrap_or(5.0 * c / m);
    let mut s1 = settings.stage1.clone();
    s1.c = c;
    s1.eta = eta;
    s1.rho = rho;
    let stage1 = run_stage1(train, &kernel, &s1)?;
    let mut s2 = settings.stage2;
    s2.gamma = gamma;
    let stage2 = run_stage2(train, &stage1.kernel, &s2)?;
    let solution = match settings.classifier {
        Classifier::Stage1Alpha => stage1.solution.clone(),
        Classifier::Retrain => {
            let k = gram(&kernel, &stage2.imputed);
            svm::train_dual(&k, y, c, &settings.svm)?
        }
    };
    Ok(TwoStageOutcome {
        c,
        gamma,
        eta,
        rho,
        imputed: stage2.imputed.clone(),
        stage1: Some(stage1),
        stage2: Some(stage2),
        solution,
    })
}

/// Two-stage imputation of `k` contiguous chunks of `train`, concatenated.
/// The classifier is retrained on the concatenation.
pub fn two_stage_subsets(
    train: &IncompleteDataset,
    subsets: usize,
    c: f64,
    gamma: f64,
    eta: f64,
    settings: &TwoStageSettings,
) -> Result<TwoStageOutcome> {
    if subsets <= 1 {
        return two_stage(train, c, gamma, eta, settings);
    }
    let n = train.n_samples();
    if subsets > n {
        return Err(Error::InvalidArgument(format!("{subsets} subsets for {n} samples")));
    }
    let mut pieces = Vec::with_capacity(subsets);
    let mut last = None;
    for s in 0..subsets {
        let idx: Vec<usize> = (s * n / subsets..(s + 1) * n / subsets).collect();
        let part = train.select(&idx);
        let out = two_stage(&part, c, gamma, eta, settings)?;
        pieces.push(out.imputed.clone());
        last = Some(out);
    }
    let columns: Vec<_> = pieces.iter().flat_map(|p| p.column_iter()).collect();
    let imputed = DMatrix::from_columns(&columns);
    let k = gram(&KernelSpec::gaussian(gamma), &imputed);
    let solution = svm::train_dual(&k, train.labels(), c, &settings.svm)?;
    let last = last.expect("at least two subsets");
    Ok(TwoStageOutcome {
        imputed,
        solution,
        stage1: None,
        stage2: None,
        ..last
    })
}

pub fn predict_with(
    outcome: &TwoStageOutcome,
    train_labels: &DVector<f64>,
    test: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let cross = cross_kernel(&KernelSpec::gaussian(outcome.gamma), &outcome.imputed, test)?;
    svm::predict(&outcome.solution.alpha, outcome.solution.bias, train_labels, &cross)
}

#[derive(Debug, Clone)]
pub struct MiSelection {
    pub c: f64,
    pub gamma: f64,
    pub holdout_accuracy: f64,
    pub imputed: DMatrix<f64>,
    pub solution: DualSolution,
}

/// Mean imputation followed by a grid search over `(C, γ)` on holdout
/// accuracy. Ties keep the first pair in grid order.
pub fn mi_grid_search(
    train: &IncompleteDataset,
    holdout: &IncompleteDataset,
    c_grid: &[f64],
    gamma_grid: &[f64],
    svm_config: &TrainConfig,
) -> Result<MiSelection> {
    if c_grid.is_empty() || gamma_grid.is_empty() {
        return Err(Error::InvalidArgument("parameter grids must be non-empty".into()));
    }
    let imputed = mean_impute(train)?;
    let y = train.labels();
    let mut best: Option<MiSelection> = None;
    for &gamma in gamma_grid {
        let kernel = KernelSpec::gaussian(gamma);
        let k = gram(&kernel, &imputed);
        let cross = cross_kernel(&kernel, &imputed, holdout.values())?;
        for &c in c_grid {
            let solution = svm::train_dual(&k, y, c, svm_config)?;
            let pred = svm::predict(&solution.alpha, solution.bias, y, &cross)?;
            let acc = accuracy(&pred, holdout.labels())?;
            if best.as_ref().is_none_or(|b| acc > b.holdout_accuracy) {
                best = Some(MiSelection {
                    c,
                    gamma,
                    holdout_accuracy: acc,
                    imputed: imputed.clone(),
                    solution,
                });
            }
        }
    }
    Ok(best.expect("non-empty grid"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationConfig {
    pub missing_ratio: f64,
    pub c_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    /// Multipliers applied to the MI choice for the two-stage refinement.
    pub refine_factors: Vec<f64>,
    pub seeds: Vec<u64>,
    pub subsets: usize,
    pub allow_large: bool,
    pub split: SplitSpec,
    pub settings: TwoStageSettings,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            missing_ratio: 0.6,
            c_grid: power_grid(-5, 5),
            gamma_grid: power_grid(-5, 5),
            refine_factors: vec![1.0, 0.5, 2.0],
            seeds: (0..10).collect(),
            subsets: 1,
            allow_large: false,
            split: SplitSpec::standard(0),
            settings: TwoStageSettings::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MethodResult {
    pub c: f64,
    pub gamma: f64,
    pub holdout_accuracy: f64,
    pub test_accuracy: f64,
    pub separability: Option<SeparabilityReport>,
}

#[derive(Debug, Clone)]
pub struct RepeatResult {
    pub seed: u64,
    pub missing_ratio: f64,
    pub mi: MethodResult,
    pub two_stage: MethodResult,
    pub eta: f64,
    pub stage1_iterations: usize,
    pub stage1_converged: bool,
    pub qp_fallbacks: usize,
}

/// Split and mask seeds derived from a repeat seed.
pub fn repeat_seeds(seed: u64) -> (u64, u64) {
    let mut rng = rng_from_seed(seed);
    (rng.random(), rng.random())
}

/// One repeat: split, MCAR on the training part, MI grid search, then the
/// two-stage refinement around `(C_MI, γ_MI)`, both scored on the test part.
pub fn evaluate_repeat(data: &IncompleteDataset, config: &EvaluationConfig, seed: u64) -> Result<RepeatResult> {
    let (split_seed, mask_seed) = repeat_seeds(seed);
    let split_spec = SplitSpec {
        seed: split_seed,
        ..config.split
    };
    let parts = dataset::split(data, &split_spec)?;
    check_size(parts.train.n_samples(), config.allow_large)?;
    let train = if config.missing_ratio > 0.0 {
        apply_mcar(&parts.train, config.missing_ratio, mask_seed)?
    } else {
        parts.train.clone()
    };
    let y = train.labels();
    let settings = &config.settings;

    let mi = mi_grid_search(
        &train,
        &parts.holdout,
        &config.c_grid,
        &config.gamma_grid,
        &settings.svm,
    )?;
    let mi_cross = cross_kernel(&KernelSpec::gaussian(mi.gamma), &mi.imputed, parts.test.values())?;
    let mi_pred = svm::predict(&mi.solution.alpha, mi.solution.bias, y, &mi_cross)?;
    let mi_result = MethodResult {
        c: mi.c,
        gamma: mi.gamma,
        holdout_accuracy: mi.holdout_accuracy,
        test_accuracy: accuracy(&mi_pred, parts.test.labels())?,
        separability: SeparabilityReport::compute(&mi.imputed, y).ok(),
    };

    let eta = mi.solution.alpha.norm().max(f64::MIN_POSITIVE);
    let mut best: Option<(f64, TwoStageOutcome)> = None;
    for &fc in &config.refine_factors {
        for &fg in &config.refine_factors {
            let out = two_stage_subsets(&train, config.subsets, mi.c * fc, mi.gamma * fg, eta, settings)?;
            let pred = predict_with(&out, y, parts.holdout.values())?;
            let acc = accuracy(&pred, parts.holdout.labels())?;
            if best.as_ref().is_none_or(|(b, _)| acc > *b) {
                best = Some((acc, out));
            }
        }
    }
    let (holdout_accuracy, chosen) = best.ok_or_else(|| Error::InvalidArgument("empty refinement grid".into()))?;
    let pred = predict_with(&chosen, y, parts.test.values())?;
    let stage1 = chosen.stage1.as_ref();
    Ok(RepeatResult {
        seed,
        missing_ratio: train.missing_ratio(),
        two_stage: MethodResult {
            c: chosen.c,
            gamma: chosen.gamma,
            holdout_accuracy,
            test_accuracy: accuracy(&pred, parts.test.labels())?,
            separability: SeparabilityReport::compute(&chosen.imputed, y).ok(),
        },
        mi: mi_result,
        eta,
        stage1_iterations: stage1.map_or(0, |s| s.trace.len()),
        stage1_converged: stage1.is_none_or(|s| s.converged),
        qp_fallbacks: stage1.map_or(0, |s| s.fallback_count),
    })
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone)]
pub struct EvaluationSummary {
    /// Sorted by seed.
    pub repeats: Vec<RepeatResult>,
    pub mi_accuracy: (f64, f64),
    pub two_stage_accuracy: (f64, f64),
}

impl EvaluationSummary {
    pub fn from_repeats(mut repeats: Vec<RepeatResult>) -> Self {
        repeats.sort_by_key(|r| r.seed);
        let mi: Vec<f64> = repeats.iter().map(|r| r.mi.test_accuracy).collect();
        let ts: Vec<f64> = repeats.iter().map(|r| r.two_stage.test_accuracy).collect();
        Self {
            mi_accuracy: mean_std(&mi),
            two_stage_accuracy: mean_std(&ts),
            repeats,
        }
    }

    /// Mean of each separability index over repeats where it was defined.
    pub fn mean_separability(&self, two_stage: bool) -> Option<SeparabilityReport> {
        let reports: Vec<SeparabilityReport> = self
            .repeats
            .iter()
            .filter_map(|r| {
                if two_stage {
                    r.two_stage.separability
                } else {
                    r.mi.separability
                }
            })
            .collect();
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&SeparabilityReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(SeparabilityReport {
            icd: avg(|r| r.icd),
            fdr: avg(|r| r.fdr),
            chi: avg(|r| r.chi),
            dbi: avg(|r| r.dbi),
        })
    }
}

pub fn evaluate(data: &IncompleteDataset, config: &EvaluationConfig) -> Result<EvaluationSummary> {
    if config.seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one repeat is required".into()));
    }
    let repeats = config
        .seeds
        .iter()
        .map(|&s| evaluate_repeat(data, config, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationSummary::from_repeats(repeats))
}

#[derive(Debug, Clone)]
pub struct RecoveryOutcome {
    pub masked: IncompleteDataset,
    pub result: ImputationResult,
    pub errors: ErrorReport,
}

/// Masks a complete dataset, recovers it from its exact Gram matrix with
/// Stage II alone and reports the errors.
pub fn kernel_recover(
    complete: &IncompleteDataset,
    missing_ratio: f64,
    seed: u64,
    config: &Stage2Config,
) -> Result<RecoveryOutcome> {
    if !complete.is_complete() {
        return Err(Error::InvalidArgument(
            "kernel recovery needs a complete dataset".into(),
        ));
    }
    let kernel = KernelSpec::gaussian(config.gamma);
    let k_gt = gram(&kernel, complete.values());
    let masked = if missing_ratio > 0.0 {
        apply_mcar(complete, missing_ratio, seed)?
    } else {
        complete.clone()
    };
    let result = run_stage2(&masked, &k_gt, config)?;
    let errors = imputation_errors(&result.imputed, complete.values(), masked.mask(), &kernel)?;
    Ok(RecoveryOutcome { masked, result, errors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticSpec};

    #[test]
    fn grid_and_stats() {
        assert_eq!(power_grid(-1, 1), vec![0.5, 1.0, 2.0]);
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn size_guard() {
        assert!(check_size(LARGE_N, false).is_ok());
        assert!(check_size(LARGE_N + 1, false).is_err());
        assert!(check_size(LARGE_N + 1, true).is_ok());
    }

    #[test]
    fn complete_training_data_is_returned_unchanged() {
        let data = generate_synthetic(&SyntheticSpec {
            n_per_class: 5,
            dim: 3,
            ..SyntheticSpec::default()
        })
        .unwrap()
        .dataset;
        let out = two_stage(&data, 1.0, 1.0, 1.0, &TwoStageSettings::default()).unwrap();
        assert_eq!(&out.imputed, data.values());
        assert!(out.stage1.is_none());
    }

    #[test]
    fn recovery_without_missing_values_is_exact() {
        let data = generate_synthetic(&SyntheticSpec {
            n_per_class: 5,
            dim: 3,
            ..SyntheticSpec::default()
        })
        .unwrap()
        .dataset;
        let out = kernel_recover(&data, 0.0, 1, &Stage2Config::new(1.0)).unwrap();
        assert_eq!(out.errors.e_x_max, 0.0);
        assert_eq!(out.errors.e_k_max, 0.0);
    }
}
