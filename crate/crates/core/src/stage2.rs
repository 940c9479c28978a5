//! Feature recovery from a target Gaussian kernel matrix by block coordinate
//! descent over sample columns.
//!
//! With `z_i = x_i + Δx_i` and `T_ij = −ln K_ij / γ`, the objective is
//! `Σ_{i≠j} (‖z_i − z_j‖² − T_ij)²`, minimized over the missing coordinates
//! subject to `z ∈ [0, 1]`.

use nalgebra::{DMatrix, DVector};

use crate::dataset::IncompleteDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage2Config {
    pub gamma: f64,
    pub max_sweeps: usize,
    pub per_column_steps: usize,
    /// Stop when the relative objective decrease of a sweep falls below this.
    pub obj_tol: f64,
    /// Kernel entries are floored here before taking the logarithm.
    pub kernel_floor: f64,
}

impl Stage2Config {
    pub fn new(gamma: f64) -> Self {
        Self {
            gamma,
            max_sweeps: 100,
            per_column_steps: 50,
            obj_tol: 1e-8,
            kernel_floor: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma", self.gamma),
            ("obj_tol", self.obj_tol),
            ("kernel_floor", self.kernel_floor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.max_sweeps == 0 || self.per_column_steps == 0 {
            return Err(Error::InvalidArgument("sweep and step counts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ImputationResult {
    pub delta_x: DMatrix<f64>,
    pub imputed: DMatrix<f64>,
    /// Objective before the first sweep followed by the value after each
    /// sweep, each evaluated from scratch.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

/// `T_ij = −ln(max(K_ij, floor)) / γ`.
pub fn squared_distance_targets(k_target: &DMatrix<f64>, gamma: f64, floor: f64) -> Result<DMatrix<f64>> {
    if k_target.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("target kernel"));
    }
    Ok(k_target.map(|k| -k.max(floor).ln() / gamma))
}

fn sq_dist(z: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    z.column(i)
        .iter()
        .zip(z.column(j).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// The objective restricted to one column: `f_i(u) = Σ_{j≠i} r_ij²` as a
/// function of the free coordinates `u` of sample `i`, with the observed part
/// of every distance precomputed.
struct ColumnProblem {
    free: Vec<usize>,
    /// Free coordinates of every other sample, `|free| × N`, column-major.
    others: Vec<f64>,
    /// Squared distance over the observed coordinates of `i`, minus `T_ij`.
    offset: Vec<f64>,
    /// Curvature scale `Σ_j (8 d_ij + 4 |r_ij|)` at the starting point.
    curvature: f64,
}

impl ColumnProblem {
    fn new(z: &DMatrix<f64>, targets: &DMatrix<f64>, mask: &DMatrix<bool>, i: usize) -> Self {
        let d = z.nrows();
        let free: Vec<usize> = (0..d).filter(|&p| !mask[(p, i)]).collect();
        let observed: Vec<usize> = (0..d).filter(|&p| mask[(p, i)]).collect();
        let zi = z.column(i);
        let (mut others, mut offset) = (Vec::new(), Vec::new());
        let mut curvature = 0.0;
        for j in (0..z.ncols()).filter(|&j| j != i) {
            let zj = z.column(j);
            let base: f64 = observed.iter().map(|&p| (zi[p] - zj[p]).powi(2)).sum();
            let rest: f64 = free.iter().map(|&p| (zi[p] - zj[p]).powi(2)).sum();
            others.extend(free.iter().map(|&p| zj[p]));
            offset.push(base - targets[(j, i)]);
            curvature += 8.0 * (base + rest) + 4.0 * (base + rest - targets[(j, i)]).abs();
        }
        Self {
            free,
            others,
            offset,
            curvature,
        }
    }

    fn value(&self, u: &[f64]) -> f64 {
        let k = u.len();
        if k == 0 {
            return self.offset.iter().map(|c| c * c).sum();
        }
        self.offset
            .iter()
            .zip(self.others.chunks_exact(k))
            .map(|(&c, zj)| {
                let r = c + u.iter().zip(zj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                r * r
            })
            .sum()
    }

    /// Gradient with respect to `u`, written into `g`.
    fn gradient(&self, u: &[f64], g: &mut [f64]) {
        let k = u.len();
        g.fill(0.0);
        if k == 0 {
            return;
        }
        for (&c, zj) in self.offset.iter().zip(self.others.chunks_exact(k)) {
            let r = c + u.iter().zip(zj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            for ((gp, a), b) in g.iter_mut().zip(u).zip(zj) {
                *gp += 4.0 * r * (a - b);
            }
        }
    }
}

/// Total objective `Σ_{i≠j} r_ij²` with `z = x + Δx`.
pub fn stage2_objective(
    ds: &IncompleteDataset,
    delta_x: &DMatrix<f64>,
    k_target: &DMatrix<f64>,
    gamma: f64,
    floor: f64,
) -> Result<f64> {
    let n = ds.n_samples();
    if delta_x.shape() != ds.values().shape() || k_target.shape() != (n, n) {
        return Err(Error::Shape(
            "correction or target kernel does not match the dataset".into(),
        ));
    }
    let targets = squared_distance_targets(k_target, gamma, floor)?;
    Ok(objective_from_targets(&(ds.values() + delta_x), &targets))
}

fn objective_from_targets(z: &DMatrix<f64>, targets: &DMatrix<f64>) -> f64 {
    let mut total = 0.0;
    for j in 0..z.ncols() {
        for i in 0..j {
            let r = sq_dist(z, i, j) - targets[(i, j)];
            total += r * r;
        }
    }
    2.0 * total
}

/// Column updates stop once no free coordinate moves under a unit
/// projected gradient step by more than this.
const STATIONARY_TOL: f64 = 1e-12;

/// Per-run solver state for the column updates.
struct ColumnSolver<'a> {
    mask: &'a DMatrix<bool>,
    targets: DMatrix<f64>,
    steps: usize,
    /// Step size carried over between visits of the same column.
    step_memory: Vec<Option<f64>>,
}

impl ColumnSolver<'_> {
    /// Projected gradient with Barzilai-Borwein steps and backtracking on the
    /// free coordinates of column `i`. Returns `(f_i before, f_i after)`.
    fn update(&mut self, z: &mut DMatrix<f64>, i: usize) -> (f64, f64) {
        let problem = ColumnProblem::new(z, &self.targets, self.mask, i);
        let mut u: Vec<f64> = problem.free.iter().map(|&p| z[(p, i)]).collect();
        let start = problem.value(&u);
        if u.is_empty() {
            return (start, start);
        }
        let mut f = start;
        let mut step = self.step_memory[i].unwrap_or(1.0 / problem.curvature.max(1e-12));
        let mut g = vec![0.0; u.len()];
        let mut g_new = g.clone();
        let mut trial = u.clone();
        problem.gradient(&u, &mut g);
        for _ in 0..self.steps {
            let stationary = u
                .iter()
                .zip(&g)
                .all(|(a, gp)| (a - (a - gp).clamp(0.0, 1.0)).abs() <= STATIONARY_TOL);
            if stationary {
                break;
            }
            let mut accepted = None;
            for _ in 0..=20 {
                for ((t, a), gp) in trial.iter_mut().zip(&u).zip(&g) {
                    *t = (a - step * gp).clamp(0.0, 1.0);
                }
                let ft = problem.value(&trial);
                if ft < f {
                    accepted = Some(ft);
                    break;
                }
                step *= 0.5;
            }
            let Some(ft) = accepted else { break };
            problem.gradient(&trial, &mut g_new);
            let (mut ss, mut sy) = (0.0, 0.0);
            for p in 0..u.len() {
                let dz = trial[p] - u[p];
                ss += dz * dz;
                sy += dz * (g_new[p] - g[p]);
            }
            step = if sy > 0.0 { ss / sy } else { 2.0 * step };
            std::mem::swap(&mut u, &mut trial);
            std::mem::swap(&mut g, &mut g_new);
            f = ft;
        }
        self.step_memory[i] = Some(step);
        for (&p, &v) in problem.free.iter().zip(&u) {
            z[(p, i)] = v;
        }
        (start, f)
    }
}

/// Updates column `i` of `Δx` by `per_column_steps` projected gradient steps
/// and returns the new column.
pub fn update_column(
    ds: &IncompleteDataset,
    delta_x: &DMatrix<f64>,
    i: usize,
    k_target: &DMatrix<f64>,
    config: &Stage2Config,
) -> Result<DVector<f64>> {
    if i >= ds.n_samples() {
        return Err(Error::InvalidArgument(format!("column {i} out of range")));
    }
    let targets = squared_distance_targets(k_target, config.gamma, config.kernel_floor)?;
    let mut z = ds.values() + delta_x;
    let mut solver = ColumnSolver {
        mask: ds.mask(),
        targets,
        steps: config.per_column_steps,
        step_memory: vec![None; ds.n_samples()],
    };
    solver.update(&mut z, i);
    Ok(z.column(i) - ds.values().column(i))
}

/// Progress reported after each sweep.
pub struct SweepInfo<'a> {
    pub sweep: usize,
    pub imputed: &'a DMatrix<f64>,
    /// Objective tracked incrementally from column updates, starting from
    /// the value at the start of the sweep.
    pub objective: f64,
}

pub fn run_stage2(ds: &IncompleteDataset, k_target: &DMatrix<f64>, config: &Stage2Config) -> Result<ImputationResult> {
    run_stage2_observed(ds, k_target, config, |_| {})
}

/// Column sweeps in ascending order. Free coordinates start at 0.5 and
/// observed coordinates are never changed. A sweep that does not lower the
/// objective is undone and ends the run.
pub fn run_stage2_observed(
    ds: &IncompleteDataset,
    k_target: &DMatrix<f64>,
    config: &Stage2Config,
    mut observer: impl FnMut(&SweepInfo),
) -> Result<ImputationResult> {
    config.validate()?;
    let n = ds.n_samples();
    if k_target.shape() != (n, n) {
        return Err(Error::Shape(format!(
            "target kernel {:?} for {n} samples",
            k_target.shape()
        )));
    }
    let targets = squared_distance_targets(k_target, config.gamma, config.kernel_floor)?;
    let mask = ds.mask();
    let x = ds.values();
    let mut z = x.zip_map(mask, |v, observed| if observed { v } else { 0.5 });
    let mut trace = vec![objective_from_targets(&z, &targets)];
    let mut converged = ds.is_complete();
    let mut solver = ColumnSolver {
        mask,
        targets,
        steps: config.per_column_steps,
        step_memory: vec![None; n],
    };
    let columns: Vec<usize> = (0..n)
        .filter(|&i| (0..ds.n_features()).any(|p| !mask[(p, i)]))
        .collect();

    if !converged {
        for sweep in 1..=config.max_sweeps {
            let before = trace[trace.len() - 1];
            let start = z.clone();
            let mut running = before;
            for &i in &columns {
                let (old, new) = solver.update(&mut z, i);
                running += 2.0 * (new - old);
            }
            let after = objective_from_targets(&z, &solver.targets);
            if after >= before {
                // Only rounding-level progress is left.
                z = start;
                converged = true;
                break;
            }
            trace.push(after);
            observer(&SweepInfo {
                sweep,
                imputed: &z,
                objective: running,
            });
            if (before - after) <= config.obj_tol * before {
                converged = true;
                break;
            }
        }
    }
    let delta_x = &z - x;
    Ok(ImputationResult {
        delta_x,
        imputed: z,
        objective_trace: trace,
        converged,
    })
}
