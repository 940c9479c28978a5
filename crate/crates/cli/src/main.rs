mod config;
mod output;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use kimpute::dataset::{apply_mcar, mean_impute, IncompleteDataset};
use kimpute::kernels::{gram, KernelSpec};
use kimpute::metrics::SeparabilityReport;
use kimpute::pipeline::{self, check_size, kernel_recover, EvaluationSummary, MethodResult};
use kimpute::stage2::Stage2Config;
use kimpute::{selftest, svm};

use config::ExperimentConfig;
use output::{fmt_f64, matrix_csv, samples_csv, table_csv, OutputDir};

#[derive(Parser)]
#[command(name = "kimpute", version, about = "Supervised two-stage missing-data imputation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mean-imputation warm start, kernel completion, then feature recovery.
    Impute(RunArgs),
    /// Repeated split/mask/train comparison of mean imputation and the two-stage method.
    Evaluate(RunArgs),
    /// Masks complete data and recovers it from its exact Gram matrix.
    KernelRecover(RunArgs),
    /// Runs the built-in property checks; exits nonzero if any fails.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; for `evaluate` the repeats use seed, seed+1, ...
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write into a non-empty output directory.
    #[arg(long)]
    force: bool,
    /// Refit the SVM on the completed kernel after Stage I.
    #[arg(long, value_name = "BOOL")]
    refit_alpha: Option<bool>,
    /// Impute this many training chunks independently.
    #[arg(long)]
    subsets: Option<usize>,
    /// Allow more than 2000 training samples.
    #[arg(long)]
    allow_large: bool,
    /// Override any config key, e.g. `--set stage1.max_iters=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<(ExperimentConfig, OutputDir)> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        for o in &self.overrides {
            config.apply_override(o)?;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
            config.seeds.clear();
        }
        if let Some(r) = self.refit_alpha {
            config.settings.stage1.refit_alpha = r;
        }
        if let Some(k) = self.subsets {
            config.subsets = k;
        }
        config.allow_large |= self.allow_large;
        if let Some(out) = &self.out {
            config.out = Some(out.clone());
        }
        config.validate()?;
        let root = config
            .out
            .clone()
            .ok_or_else(|| anyhow!("no output directory (use --out or set `out`)"))?;
        let out = OutputDir::create(&root, self.force)?;
        Ok((config, out))
    }
}

fn manifest(command: &str, config: &ExperimentConfig, elapsed: f64, resolved: &[(&str, String)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# kimpute {} {command}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "# wall_clock_seconds = {elapsed:.3}");
    for (k, v) in resolved {
        let _ = writeln!(s, "# resolved {k} = {v}");
    }
    s.push_str(&config.render());
    s
}

fn masked_input(config: &ExperimentConfig, data: &IncompleteDataset) -> Result<IncompleteDataset> {
    if config.missing_ratio > 0.0 {
        Ok(apply_mcar(data, config.missing_ratio, config.seed)?)
    } else {
        Ok(data.clone())
    }
}

/// Observed entries that changed plus entries outside [0, 1].
fn constraint_violations(ds: &IncompleteDataset, imputed: &kimpute::nalgebra::DMatrix<f64>) -> usize {
    imputed
        .iter()
        .zip(ds.values().iter())
        .zip(ds.mask().iter())
        .filter(|((z, x), &o)| (o && z != x) || !(0.0..=1.0).contains(*z))
        .count()
}

fn cmd_impute(args: &RunArgs) -> Result<()> {
    let (config, out) = args.resolve()?;
    let start = Instant::now();
    let (data, scaling) = config.load()?;
    check_size(data.n_samples(), config.allow_large)?;
    let ds = masked_input(&config, &data)?;
    let y = ds.labels();

    let warm = gram(&KernelSpec::gaussian(config.gamma), &mean_impute(&ds)?);
    let alpha_mi = svm::train_dual(&warm, y, config.c, &config.settings.svm)?.alpha;
    let eta = config.eta.unwrap_or_else(|| alpha_mi.norm().max(f64::MIN_POSITIVE));
    let outcome = pipeline::two_stage_subsets(&ds, config.subsets, config.c, config.gamma, eta, &config.settings)?;

    out.write("imputed.csv", &samples_csv(&outcome.imputed, y))?;
    if let Some(scaling) = &scaling {
        out.write(
            "imputed_original.csv",
            &samples_csv(&scaling.invert(&outcome.imputed), y),
        )?;
    }
    let mut report = String::new();
    let _ = writeln!(
        report,
        "samples {} features {} missing ratio {:.4}",
        ds.n_samples(),
        ds.n_features(),
        ds.missing_ratio()
    );
    let _ = writeln!(
        report,
        "C {} gamma {} eta {} rho {}",
        config.c,
        config.gamma,
        fmt_f64(eta),
        fmt_f64(outcome.rho)
    );
    if let Some(s1) = &outcome.stage1 {
        out.write("kernel.csv", &matrix_csv(&s1.kernel))?;
        let rows: Vec<Vec<String>> = s1
            .trace
            .iter()
            .map(|r| {
                vec![
                    r.iter.to_string(),
                    fmt_f64(r.loss),
                    fmt_f64(r.delta_loss),
                    fmt_f64(r.min_eig_e),
                    fmt_f64(r.bound_violation),
                    fmt_f64(r.kdelta_change),
                    r.qp_fallback.to_string(),
                ]
            })
            .collect();
        let header = [
            "iter",
            "loss",
            "delta_loss",
            "min_eig_e",
            "bound_violation",
            "kdelta_change",
            "qp_fallback",
        ];
        out.write("stage1_trace.csv", &table_csv(&header, &rows))?;
        let _ = writeln!(
            report,
            "stage1 iterations {} converged {} qp fallbacks {}",
            s1.trace.len(),
            s1.converged,
            s1.fallback_count
        );
    }
    if let Some(s2) = &outcome.stage2 {
        let rows: Vec<Vec<String>> = s2
            .objective_trace
            .iter()
            .enumerate()
            .map(|(k, v)| vec![k.to_string(), fmt_f64(*v)])
            .collect();
        out.write("stage2_trace.csv", &table_csv(&["sweep", "objective"], &rows))?;
        let _ = writeln!(
            report,
            "stage2 sweeps {} converged {}",
            s2.objective_trace.len() - 1,
            s2.converged
        );
    }
    let _ = writeln!(
        report,
        "constraint violations {}",
        constraint_violations(&ds, &outcome.imputed)
    );
    out.write("report.txt", &report)?;
    let elapsed = start.elapsed().as_secs_f64();
    let resolved = [("eta", fmt_f64(eta)), ("rho", fmt_f64(outcome.rho))];
    out.write("manifest.toml", &manifest("impute", &config, elapsed, &resolved))?;
    print!("{report}");
    Ok(())
}

fn method_row(name: &str, seed: u64, m: &MethodResult) -> Vec<String> {
    let sep = m.separability;
    let cell = |f: fn(&SeparabilityReport) -> f64| sep.as_ref().map_or_else(|| "NA".to_string(), |s| fmt_f64(f(s)));
    vec![
        seed.to_string(),
        name.to_string(),
        fmt_f64(m.c),
        fmt_f64(m.gamma),
        fmt_f64(m.holdout_accuracy),
        fmt_f64(m.test_accuracy),
        cell(|s| s.icd),
        cell(|s| s.fdr),
        cell(|s| s.chi),
        cell(|s| s.dbi),
    ]
}

fn evaluation_report(summary: &EvaluationSummary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} repeats", summary.repeats.len());
    let _ = writeln!(s, "{:<10} {:>8} {:>8}", "method", "mean", "std");
    for (name, (mean, std)) in [("MI", summary.mi_accuracy), ("two-stage", summary.two_stage_accuracy)] {
        let _ = writeln!(s, "{name:<10} {mean:>8.4} {std:>8.4}");
    }
    let _ = writeln!(s, "\nseparability of imputed training data (mean over repeats)");
    let _ = writeln!(
        s,
        "{:<10} {:>10} {:>10} {:>10} {:>10}",
        "method", "ICD", "FDR", "CHI", "DBI"
    );
    for (name, two_stage) in [("MI", false), ("two-stage", true)] {
        match summary.mean_separability(two_stage) {
            Some(r) => {
                let _ = writeln!(
                    s,
                    "{name:<10} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
                    r.icd, r.fdr, r.chi, r.dbi
                );
            }
            None => {
                let _ = writeln!(s, "{name:<10} undefined");
            }
        }
    }
    s
}

fn cmd_evaluate(args: &RunArgs) -> Result<()> {
    let (config, out) = args.resolve()?;
    let start = Instant::now();
    let (data, _) = config.load()?;
    let eval = config.evaluation();
    let mut repeats = Vec::new();
    for &seed in &eval.seeds {
        let t = Instant::now();
        let r = pipeline::evaluate_repeat(&data, &eval, seed).with_context(|| format!("repeat with seed {seed}"))?;
        eprintln!(
            "seed {seed}: MI {:.4} two-stage {:.4} ({:.1}s)",
            r.mi.test_accuracy,
            r.two_stage.test_accuracy,
            t.elapsed().as_secs_f64()
        );
        repeats.push(r);
    }
    let summary = EvaluationSummary::from_repeats(repeats);

    let header = [
        "seed",
        "method",
        "c",
        "gamma",
        "holdout_accuracy",
        "test_accuracy",
        "icd",
        "fdr",
        "chi",
        "dbi",
    ];
    let rows: Vec<Vec<String>> = summary
        .repeats
        .iter()
        .flat_map(|r| {
            [
                method_row("mi", r.seed, &r.mi),
                method_row("two_stage", r.seed, &r.two_stage),
            ]
        })
        .collect();
    out.write("repeats.csv", &table_csv(&header, &rows))?;
    let rows: Vec<Vec<String>> = summary
        .repeats
        .iter()
        .map(|r| {
            vec![
                r.seed.to_string(),
                fmt_f64(r.missing_ratio),
                fmt_f64(r.eta),
                r.stage1_iterations.to_string(),
                r.stage1_converged.to_string(),
                r.qp_fallbacks.to_string(),
            ]
        })
        .collect();
    let header = [
        "seed",
        "missing_ratio",
        "eta",
        "stage1_iterations",
        "stage1_converged",
        "qp_fallbacks",
    ];
    out.write("stage1_runs.csv", &table_csv(&header, &rows))?;
    let rows = vec![
        vec![
            "mi".into(),
            fmt_f64(summary.mi_accuracy.0),
            fmt_f64(summary.mi_accuracy.1),
        ],
        vec![
            "two_stage".into(),
            fmt_f64(summary.two_stage_accuracy.0),
            fmt_f64(summary.two_stage_accuracy.1),
        ],
    ];
    out.write(
        "summary.csv",
        &table_csv(&["method", "mean_accuracy", "std_accuracy"], &rows),
    )?;
    let report = evaluation_report(&summary);
    out.write("report.txt", &report)?;
    out.write(
        "manifest.toml",
        &manifest("evaluate", &config, start.elapsed().as_secs_f64(), &[]),
    )?;
    print!("{report}");
    Ok(())
}

fn cmd_kernel_recover(args: &RunArgs) -> Result<()> {
    let (config, out) = args.resolve()?;
    let start = Instant::now();
    let (data, _) = config.load()?;
    check_size(data.n_samples(), config.allow_large)?;
    let stage2 = Stage2Config {
        gamma: config.gamma,
        ..config.settings.stage2
    };
    let rec = kernel_recover(&data, config.missing_ratio, config.seed, &stage2)?;
    let e = &rec.errors;
    let header = ["e_x_max", "e_x_mean", "e_k_max", "e_k_mean"];
    let row = vec![
        fmt_f64(e.e_x_max),
        fmt_f64(e.e_x_mean),
        fmt_f64(e.e_k_max),
        fmt_f64(e.e_k_mean),
    ];
    out.write("errors.csv", &table_csv(&header, &[row]))?;
    out.write("imputed.csv", &samples_csv(&rec.result.imputed, data.labels()))?;
    let rows: Vec<Vec<String>> = rec
        .result
        .objective_trace
        .iter()
        .enumerate()
        .map(|(k, v)| vec![k.to_string(), fmt_f64(*v)])
        .collect();
    out.write("stage2_trace.csv", &table_csv(&["sweep", "objective"], &rows))?;
    let mut report = String::new();
    let _ = writeln!(
        report,
        "samples {} features {} masked {}",
        data.n_samples(),
        data.n_features(),
        rec.masked.missing_count()
    );
    let _ = writeln!(report, "e_X max {:e} mean {:e}", e.e_x_max, e.e_x_mean);
    let _ = writeln!(report, "e_K max {:e} mean {:e}", e.e_k_max, e.e_k_mean);
    let _ = writeln!(
        report,
        "sweeps {} converged {}",
        rec.result.objective_trace.len() - 1,
        rec.result.converged
    );
    out.write("report.txt", &report)?;
    out.write(
        "manifest.toml",
        &manifest("kernel-recover", &config, start.elapsed().as_secs_f64(), &[]),
    )?;
    print!("{report}");
    Ok(())
}

fn cmd_selftest(seed: u64) -> Result<bool> {
    let start = Instant::now();
    let outcomes = selftest::run_all(seed);
    for o in &outcomes {
        match &o.failure {
            None => println!("PASS {}", o.name),
            Some(why) => println!("FAIL {}: {why}", o.name),
        }
    }
    println!("{:.1}s", start.elapsed().as_secs_f64());
    Ok(outcomes.iter().all(selftest::PropertyOutcome::passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Impute(a) => cmd_impute(a).map(|_| true),
        Command::Evaluate(a) => cmd_evaluate(a).map(|_| true),
        Command::KernelRecover(a) => cmd_kernel_recover(a).map(|_| true),
        Command::Selftest { seed } => cmd_selftest(*seed),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
