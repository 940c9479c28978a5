mod common;

use common::{fd_gradient, min_eig_bisection, random_symmetric, rng};
use kimpute::dataset::{apply_mcar, generate_synthetic, mean_impute, IncompleteDataset, SyntheticSpec};
use kimpute::kernels::{gram, observed_kernel_with_bounds, KernelSpec};
use kimpute::nalgebra::{DMatrix, DVector};
use kimpute::stage1::{
    run_stage1, step1_unconstrained, step1_update_kdelta, step2_unconstrained, step2_update_e, step3_update_alpha,
    Stage1Config, Stage1State,
};
use kimpute::svm::{train_dual, TrainConfig};
use rand::Rng;

fn fixture(n_per_class: usize, dim: usize, m: f64, seed: u64) -> IncompleteDataset {
    let spec = SyntheticSpec {
        n_per_class,
        dim,
        seed,
        ..SyntheticSpec::default()
    };
    let data = generate_synthetic(&spec).unwrap().dataset;
    apply_mcar(&data, m, seed).unwrap()
}

fn random_state(r: &mut kimpute::dataset::SeededRng, n: usize, c: f64) -> (Stage1State, DMatrix<f64>, DVector<f64>) {
    let mut state = Stage1State::initial(n, c);
    state.alpha = DVector::from_fn(n, |_, _| r.random_range(0.0..c));
    state.k_delta = DMatrix::from_element(n, n, 1.0) + random_symmetric(r, n, 0.2);
    state.e = DMatrix::from_element(n, n, 1.0) + random_symmetric(r, n, 0.2);
    let k_o = DMatrix::from_element(n, n, 0.5) + random_symmetric(r, n, 0.3);
    let y = DVector::from_fn(n, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
    (state, k_o, y)
}

#[test]
fn closed_forms_are_stationary() {
    let mut r = rng(21);
    for _ in 0..20 {
        let n = r.random_range(2..=5);
        let (state, k_o, y) = random_state(&mut r, n, 1.5);
        let (eta, rho) = (r.random_range(0.5..3.0), r.random_range(0.5..3.0));
        let ay = state.alpha.component_mul(&y);
        let weights = &ay * ay.transpose();

        let g1 = |k: &DMatrix<f64>| {
            -0.5 * weights
                .component_mul(&k_o)
                .component_mul(&state.e)
                .component_mul(k)
                .sum()
                + eta * k.map(|v| v - 1.0).norm_squared()
        };
        let k_star = step1_unconstrained(&state, &k_o, &y, eta);
        // Both objectives are quadratic, so central differences are exact up to rounding.
        assert!(fd_gradient(g1, &k_star, 1e-3).norm() < 1e-8);

        let g2 = |e: &DMatrix<f64>| {
            0.5 * weights
                .component_mul(&k_o)
                .component_mul(&state.k_delta)
                .component_mul(e)
                .sum()
                + rho * e.map(|v| v - 1.0).norm_squared()
        };
        let e_star = step2_unconstrained(&state, &k_o, &y, rho);
        assert!(fd_gradient(g2, &e_star, 1e-3).norm() < 1e-8);
    }
}

#[test]
fn invariants_hold_after_every_step() {
    let ds = fixture(10, 4, 0.4, 3);
    let kernel = KernelSpec::gaussian(1.0);
    let bk = observed_kernel_with_bounds(&kernel, &ds).unwrap();
    let y = ds.labels();
    let (n, c) = (ds.n_samples(), 1.0);
    let config = Stage1Config::new(c, 2.0, 5.0 * c / ds.missing_ratio());
    let mut state = Stage1State::initial(n, c);
    for t in 1..=30 {
        state.iter = t;
        state.k_delta = step1_update_kdelta(&state, &bk, y, &config).unwrap().matrix;
        for ((v, l), u) in state.k_delta.iter().zip(bk.lower.iter()).zip(bk.upper.iter()) {
            assert!(*v >= l - 1e-6 && *v <= u + 1e-6);
        }
        state.e = step2_update_e(&state, &bk, y, &config).unwrap();
        assert!(min_eig_bisection(&state.e) >= -1e-8);
        state.alpha = step3_update_alpha(&state, &bk, y, &config).unwrap();
        assert!(y.dot(&state.alpha).abs() <= 1e-8 * n as f64 * c);
        // The equality shift may push entries out of the box by at most `C`.
        assert!(state.alpha.iter().all(|&a| (-c..=2.0 * c).contains(&a)));
    }
}

#[test]
fn default_penalties_terminate_within_the_iteration_cap() {
    for seed in [1, 3] {
        let ds = fixture(20, 6, 0.5, seed);
        let gamma = 0.5;
        let c = 1.0;
        let k_mi = gram(&KernelSpec::gaussian(gamma), &mean_impute(&ds).unwrap());
        let alpha_mi = train_dual(&k_mi, ds.labels(), c, &TrainConfig::default())
            .unwrap()
            .alpha;
        let config = Stage1Config::new(c, alpha_mi.norm(), 5.0 * c / ds.missing_ratio());
        let out = run_stage1(&ds, &KernelSpec::gaussian(gamma), &config).unwrap();
        assert!(out.trace.len() <= 200);
        if out.converged {
            assert!(out.trace.last().unwrap().delta_loss < config.loss_tol);
        }
        assert!(out
            .trace
            .iter()
            .all(|r| r.bound_violation <= 1e-6 && r.min_eig_e >= -1e-8));
        let kernel = &out.kernel;
        assert!((kernel - kernel.transpose()).amax() < 1e-12);
        assert!(kernel.diagonal().iter().all(|&v| (v - 1.0).abs() < 1e-9));
    }
}

#[test]
fn large_eta_contracts_kdelta_changes() {
    let ds = fixture(6, 4, 0.4, 5);
    let (n, c) = (ds.n_samples(), 0.5_f64);
    let bk = observed_kernel_with_bounds(&KernelSpec::gaussian(1.0), &ds).unwrap();
    let kappa = bk.observed.norm();
    let eta = 2.0 * (n * n) as f64 * c.powi(4) * kappa * kappa / 4.0;
    let mut config = Stage1Config::new(c, eta, 5.0 * c / ds.missing_ratio());
    config.loss_tol = 1e-300;
    config.max_iters = 60;
    let out = run_stage1(&ds, &KernelSpec::gaussian(1.0), &config).unwrap();
    let changes: Vec<f64> = out.trace.iter().map(|r| r.kdelta_change).collect();
    let burn_in = changes.len() / 3;
    for w in changes[burn_in..].windows(2) {
        if w[0] > 1e-13 {
            assert!(w[1] / w[0] < 1.0, "changes {changes:?}");
        }
    }
}
