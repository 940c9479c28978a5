//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use kimpute::dataset::{rng_from_seed, SeededRng};
use kimpute::nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn rng(seed: u64) -> SeededRng {
    rng_from_seed(seed)
}

pub fn random_symmetric(rng: &mut SeededRng, n: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-scale..scale));
    (&a + a.transpose()) * 0.5
}

/// Orthogonal matrix from Gram-Schmidt on a random square matrix.
pub fn random_orthogonal(rng: &mut SeededRng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let mut q = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let mut v = a.column(k).into_owned();
        for j in 0..k {
            let proj = q.column(j).dot(&v);
            v -= q.column(j) * proj;
        }
        let norm = v.norm();
        q.set_column(k, &(v / norm));
    }
    q
}

/// `Σ_k d_k u_k u_kᵀ` by explicit outer products.
pub fn outer_sum(u: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let n = u.nrows();
    let mut k = DMatrix::zeros(n, n);
    for (c, &dc) in d.iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] += dc * u[(i, c)] * u[(j, c)];
            }
        }
    }
    k
}

/// Smallest eigenvalue by bisection on Sylvester inertia (LDLᵀ pivots count).
pub fn min_eig_bisection(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let bound = (0..n)
        .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        + 1.0;
    let negatives_below = |s: f64| {
        // Count of eigenvalues below s via Gaussian elimination pivots of A − sI.
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] -= s;
        }
        let mut count = 0;
        for k in 0..n {
            let mut pivot = m[(k, k)];
            if pivot == 0.0 {
                pivot = -1e-300;
            }
            if pivot < 0.0 {
                count += 1;
            }
            for i in k + 1..n {
                let f = m[(i, k)] / pivot;
                for j in k + 1..n {
                    m[(i, j)] -= f * m[(k, j)];
                }
            }
        }
        count
    };
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if negatives_below(mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// ADMM for `min ‖d − λ‖²` subject to `d ≥ 0` and
/// `lower ≤ U diag(d) Uᵀ ≤ upper`, splitting on `K = U diag(d) Uᵀ`.
pub fn qp_admm_oracle(
    u: &DMatrix<f64>,
    lambda: &DVector<f64>,
    lower: &DMatrix<f64>,
    upper: &DMatrix<f64>,
    iters: usize,
) -> DVector<f64> {
    let n = lambda.len();
    let rho = 1.0;
    let adjoint = |m: &DMatrix<f64>| DVector::from_fn(n, |c, _| (u.column(c).transpose() * m * u.column(c))[(0, 0)]);
    let mut k = outer_sum(u, &lambda.map(|v| v.max(0.0)));
    let mut w = DMatrix::zeros(n, n);
    let mut d = DVector::zeros(n);
    for _ in 0..iters {
        let target = adjoint(&(&k - &w));
        d = DVector::from_fn(n, |c, _| ((2.0 * lambda[c] + rho * target[c]) / (2.0 + rho)).max(0.0));
        let ad = outer_sum(u, &d);
        k = (&ad + &w).zip_zip_map(lower, upper, |v, l, h| v.clamp(l, h));
        w += &ad - &k;
    }
    d
}

/// Central differences of `f` at every coordinate of `x`.
pub fn fd_gradient(f: impl Fn(&DMatrix<f64>) -> f64, x: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        let (mut up, mut dn) = (x.clone(), x.clone());
        up[(i, j)] += h;
        dn[(i, j)] -= h;
        (f(&up) - f(&dn)) / (2.0 * h)
    })
}

fn class_indices(labels: &DVector<f64>) -> (Vec<usize>, Vec<usize>) {
    let pos = (0..labels.len()).filter(|&i| labels[i] > 0.0).collect();
    let neg = (0..labels.len()).filter(|&i| labels[i] <= 0.0).collect();
    (pos, neg)
}

fn naive_mean(x: &DMatrix<f64>, idx: &[usize]) -> Vec<f64> {
    (0..x.nrows())
        .map(|p| {
            let mut s = 0.0;
            for &i in idx {
                s += x[(p, i)];
            }
            s / idx.len() as f64
        })
        .collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for p in 0..a.len() {
        s += (a[p] - b[p]) * (a[p] - b[p]);
    }
    s.sqrt()
}

pub fn naive_icd(x: &DMatrix<f64>, labels: &DVector<f64>) -> f64 {
    let (pos, neg) = class_indices(labels);
    dist(&naive_mean(x, &pos), &naive_mean(x, &neg))
}

/// `Tr S_b / Tr S_w` from explicit scatter matrices.
pub fn naive_fdr(x: &DMatrix<f64>, labels: &DVector<f64>) -> f64 {
    let (pos, neg) = class_indices(labels);
    let all: Vec<usize> = (0..x.ncols()).collect();
    let mu = naive_mean(x, &all);
    let d = x.nrows();
    let mut sb = DMatrix::<f64>::zeros(d, d);
    let mut sw = DMatrix::<f64>::zeros(d, d);
    for idx in [&pos, &neg] {
        let mc = naive_mean(x, idx);
        for p in 0..d {
            for q in 0..d {
                sb[(p, q)] += idx.len() as f64 * (mc[p] - mu[p]) * (mc[q] - mu[q]);
                for &i in idx.iter() {
                    sw[(p, q)] += (x[(p, i)] - mc[p]) * (x[(q, i)] - mc[q]);
                }
            }
        }
    }
    sb.trace() / sw.trace()
}

/// Calinski-Harabasz with `k = 2` clusters: `(Tr S_b/(k−1)) / (Tr S_w/(N−k))`.
pub fn naive_chi(x: &DMatrix<f64>, labels: &DVector<f64>) -> f64 {
    let n = x.ncols() as f64;
    naive_fdr(x, labels) * (n - 2.0) / (2.0 - 1.0)
}

/// Davies-Bouldin: mean over clusters of the worst `(σ_i + σ_j)/‖μ_i − μ_j‖`.
pub fn naive_dbi(x: &DMatrix<f64>, labels: &DVector<f64>) -> f64 {
    let (pos, neg) = class_indices(labels);
    let groups = [pos, neg];
    let means: Vec<Vec<f64>> = groups.iter().map(|g| naive_mean(x, g)).collect();
    let sigma: Vec<f64> = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| {
            let col = |i: usize| (0..x.nrows()).map(|p| x[(p, i)]).collect::<Vec<_>>();
            g.iter().map(|&i| dist(&col(i), m)).sum::<f64>() / g.len() as f64
        })
        .collect();
    let mut total = 0.0;
    for i in 0..2 {
        let mut worst = f64::NEG_INFINITY;
        for j in 0..2 {
            if i != j {
                worst = worst.max((sigma[i] + sigma[j]) / dist(&means[i], &means[j]));
            }
        }
        total += worst;
    }
    total / 2.0
}
