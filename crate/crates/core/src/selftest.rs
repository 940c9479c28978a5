//! Fixed-seed property suites run by the `selftest` command.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dataset::{apply_mcar, generate_synthetic, rng_from_seed, SeededRng, SyntheticSpec};
use crate::error::Result;
use crate::kernels::{gram, KernelSpec};
use crate::matops::{self, explicit_v, sym_eig, vec_of};
use crate::stage2::{run_stage2_observed, Stage2Config};
use crate::svm::{dual_gradient, dual_objective, project_alpha};

pub type Projector = fn(&DMatrix<f64>) -> Result<DMatrix<f64>>;

#[derive(Debug, Clone)]
pub struct PropertyOutcome {
    pub name: &'static str,
    /// `None` on success, otherwise the first counterexample found.
    pub failure: Option<String>,
}

impl PropertyOutcome {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

fn random_symmetric(rng: &mut SeededRng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    (&a + a.transpose()) * 0.5
}

fn random_orthogonal(rng: &mut SeededRng, n: usize) -> DMatrix<f64> {
    sym_eig(&random_symmetric(rng, n)).expect("finite input").vectors
}

fn check(name: &'static str, body: impl FnOnce() -> std::result::Result<(), String>) -> PropertyOutcome {
    PropertyOutcome {
        name,
        failure: body().err(),
    }
}

/// Output is PSD, PSD input is a fixed point, and the map is idempotent and
/// non-expansive in the Frobenius norm.
pub fn projection_properties(project: Projector, seed: u64) -> PropertyOutcome {
    check("psd projection", || {
        let mut rng = rng_from_seed(seed);
        let err = |e: crate::Error| e.to_string();
        for trial in 0..50 {
            let n = rng.random_range(1..=8);
            let a = random_symmetric(&mut rng, n);
            let b = random_symmetric(&mut rng, n);
            let pa = project(&a).map_err(err)?;
            let pb = project(&b).map_err(err)?;
            let min_eig = matops::min_eigenvalue(&pa).map_err(err)?;
            if min_eig < -1e-10 {
                return Err(format!("trial {trial}: output has eigenvalue {min_eig:e}"));
            }
            let again = project(&pa).map_err(err)?;
            if (&again - &pa).norm() > 1e-10 {
                return Err(format!("trial {trial}: not idempotent"));
            }
            if (&pa - &pb).norm() > (&a - &b).norm() + 1e-10 {
                return Err(format!("trial {trial}: expansive"));
            }
            let psd = &a * a.transpose();
            if (project(&psd).map_err(err)? - &psd).norm() > 1e-10 * (1.0 + psd.norm()) {
                return Err(format!("trial {trial}: PSD input moved"));
            }
        }
        Ok(())
    })
}

pub fn vvt_identity(seed: u64) -> PropertyOutcome {
    check("VV^T identity", || {
        let mut rng = rng_from_seed(seed);
        for n in 1..=6 {
            let u = random_orthogonal(&mut rng, n);
            let v = explicit_v(&u);
            let gap = (&v * v.transpose() - DMatrix::identity(n, n)).norm();
            if gap >= 1e-8 {
                return Err(format!("N={n}: ||VV^T - I|| = {gap:e}"));
            }
            let sigma = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let recovered = &v * vec_of(&matops::spectral_matrix(&u, &sigma));
            if (recovered - &sigma).amax() >= 1e-8 {
                return Err(format!("N={n}: V vec(U S U^T) != diag(S)"));
            }
        }
        Ok(())
    })
}

pub fn dual_gradient_check(seed: u64) -> PropertyOutcome {
    check("dual gradient", || {
        let mut rng = rng_from_seed(seed);
        for trial in 0..20 {
            let n = rng.random_range(2..=6);
            let x = DMatrix::from_fn(2, n, |_, _| rng.random_range(0.0..1.0));
            let k = gram(&KernelSpec::gaussian(1.0), &x);
            let y = DVector::from_fn(n, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
            let alpha = DVector::from_fn(n, |_, _| rng.random_range(0.0..1.0));
            let g = dual_gradient(&alpha, &k, &y);
            let h = 1e-6;
            for p in 0..n {
                let (mut up, mut dn) = (alpha.clone(), alpha.clone());
                up[p] += h;
                dn[p] -= h;
                let fd = (dual_objective(&up, &k, &y) - dual_objective(&dn, &k, &y)) / (2.0 * h);
                if (fd - g[p]).abs() > 1e-6 * g[p].abs().max(1.0) {
                    return Err(format!("trial {trial}: coordinate {p} analytic {} vs {fd}", g[p]));
                }
            }
            let projected = project_alpha(&alpha, &y, 0.5);
            if y.dot(&projected).abs() > 1e-12 {
                return Err(format!("trial {trial}: y^T alpha = {:e}", y.dot(&projected)));
            }
        }
        Ok(())
    })
}

/// Stage-II objective never increases, observed entries stay fixed and every
/// iterate lies in `[0, 1]`.
pub fn bcd_monotonicity(seed: u64) -> PropertyOutcome {
    check("BCD monotonicity", || {
        for (m, gamma) in [(0.3, 1.0), (0.7, 0.5)] {
            let spec = SyntheticSpec {
                n_per_class: 15,
                dim: 5,
                seed,
                ..SyntheticSpec::default()
            };
            let data = generate_synthetic(&spec).map_err(|e| e.to_string())?.dataset;
            let masked = apply_mcar(&data, m, seed).map_err(|e| e.to_string())?;
            let k = gram(&KernelSpec::gaussian(gamma), data.values());
            let mut config = Stage2Config::new(gamma);
            config.max_sweeps = 20;
            let mut problem = None;
            let out = run_stage2_observed(&masked, &k, &config, |info| {
                if problem.is_some() {
                    return;
                }
                let moved = info
                    .imputed
                    .iter()
                    .zip(masked.values().iter())
                    .zip(masked.mask().iter())
                    .any(|((z, x), &o)| o && z != x);
                let outside = info.imputed.iter().any(|v| !(0.0..=1.0).contains(v));
                if moved || outside {
                    problem = Some(format!("m={m}: sweep {} breaks the feasible set", info.sweep));
                }
            })
            .map_err(|e| e.to_string())?;
            if let Some(p) = problem {
                return Err(p);
            }
            if let Some(w) = out.objective_trace.windows(2).find(|w| w[1] > w[0]) {
                return Err(format!("m={m}: objective rose from {:e} to {:e}", w[0], w[1]));
            }
        }
        Ok(())
    })
}

pub fn run_all_with(project: Projector, seed: u64) -> Vec<PropertyOutcome> {
    vec![
        projection_properties(project, seed),
        vvt_identity(seed),
        dual_gradient_check(seed),
        bcd_monotonicity(seed),
    ]
}

pub fn run_all(seed: u64) -> Vec<PropertyOutcome> {
    run_all_with(matops::psd_project, seed)
}
