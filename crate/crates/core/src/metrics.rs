//! Imputation errors, class-separability indices, accuracy and PCA projection.
//!
//! Feature matrices are `d×N` with samples in columns; labels are ±1.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::kernels::{gram, KernelSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub e_x_max: f64,
    pub e_x_mean: f64,
    pub e_k_max: f64,
    pub e_k_mean: f64,
    /// True when no position was masked, so the feature errors are 0 by convention.
    pub no_masked_positions: bool,
}

/// Feature errors over masked positions (`mask == false`) and kernel errors
/// over all entries of the two Gram matrices.
pub fn imputation_errors(
    imputed: &DMatrix<f64>,
    ground_truth: &DMatrix<f64>,
    mask: &DMatrix<bool>,
    kernel: &KernelSpec,
) -> Result<ErrorReport> {
    if imputed.shape() != ground_truth.shape() || mask.shape() != imputed.shape() {
        return Err(Error::Shape(
            "imputed, ground truth and mask must have equal shapes".into(),
        ));
    }
    let errs: Vec<f64> = imputed
        .iter()
        .zip(ground_truth.iter())
        .zip(mask.iter())
        .filter(|(_, &observed)| !observed)
        .map(|((a, b), _)| (a - b).abs())
        .collect();
    let (e_x_max, e_x_mean) = max_mean(&errs);
    let k_diff = (gram(kernel, imputed) - gram(kernel, ground_truth)).abs();
    let (e_k_max, e_k_mean) = max_mean(k_diff.as_slice());
    Ok(ErrorReport {
        e_x_max,
        e_x_mean,
        e_k_max,
        e_k_mean,
        no_masked_positions: errs.is_empty(),
    })
}

fn max_mean(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let max = values.iter().copied().fold(0.0, f64::max);
    (max, values.iter().sum::<f64>() / values.len() as f64)
}

struct Classes {
    pos: Vec<usize>,
    neg: Vec<usize>,
}

fn classes(features: &DMatrix<f64>, labels: &DVector<f64>) -> Result<Classes> {
    if features.ncols() != labels.len() {
        return Err(Error::Shape(format!(
            "{} samples with {} labels",
            features.ncols(),
            labels.len()
        )));
    }
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] > 0.0).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] <= 0.0).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Degenerate("both classes must be non-empty".into()));
    }
    Ok(Classes { pos, neg })
}

fn centroid(features: &DMatrix<f64>, idx: &[usize]) -> DVector<f64> {
    let mut mu = DVector::zeros(features.nrows());
    for &i in idx {
        mu += features.column(i);
    }
    mu / idx.len() as f64
}

/// Distance between the two class centroids.
pub fn icd(features: &DMatrix<f64>, labels: &DVector<f64>) -> Result<f64> {
    let c = classes(features, labels)?;
    Ok((centroid(features, &c.pos) - centroid(features, &c.neg)).norm())
}

/// `(Tr S_b, Tr S_w)`.
fn scatter_traces(features: &DMatrix<f64>, c: &Classes) -> (f64, f64) {
    let all: Vec<usize> = (0..features.ncols()).collect();
    let mu = centroid(features, &all);
    let mut between = 0.0;
    let mut within = 0.0;
    for idx in [&c.pos, &c.neg] {
        let mu_c = centroid(features, idx);
        between += idx.len() as f64 * (&mu_c - &mu).norm_squared();
        within += idx
            .iter()
            .map(|&i| (features.column(i) - &mu_c).norm_squared())
            .sum::<f64>();
    }
    (between, within)
}

/// `Tr(S_b) / Tr(S_w)`.
pub fn fdr(features: &DMatrix<f64>, labels: &DVector<f64>) -> Result<f64> {
    let c = classes(features, labels)?;
    if c.pos.len() < 2 || c.neg.len() < 2 {
        return Err(Error::Degenerate("each class needs at least two samples".into()));
    }
    let (between, within) = scatter_traces(features, &c);
    if within <= 0.0 {
        return Err(Error::Degenerate("within-class scatter is zero".into()));
    }
    Ok(between / within)
}

/// Calinski-Harabasz index for two classes: `fdr · (N − 2)`.
pub fn chi(features: &DMatrix<f64>, labels: &DVector<f64>) -> Result<f64> {
    Ok(fdr(features, labels)? * (features.ncols() as f64 - 2.0))
}

/// Davies-Bouldin index for two classes, with `σ` the mean Euclidean
/// distance of a class to its centroid.
pub fn dbi(features: &DMatrix<f64>, labels: &DVector<f64>) -> Result<f64> {
    let c = classes(features, labels)?;
    let spread = |idx: &[usize], mu: &DVector<f64>| {
        idx.iter().map(|&i| (features.column(i) - mu).norm()).sum::<f64>() / idx.len() as f64
    };
    let (mu_p, mu_n) = (centroid(features, &c.pos), centroid(features, &c.neg));
    let sep = (&mu_p - &mu_n).norm();
    if sep <= 0.0 {
        return Err(Error::Degenerate("class centroids coincide".into()));
    }
    // With two classes both terms of the average are the same ratio.
    Ok((spread(&c.pos, &mu_p) + spread(&c.neg, &mu_n)) / sep)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparabilityReport {
    pub icd: f64,
    pub fdr: f64,
    pub chi: f64,
    pub dbi: f64,
}

impl SeparabilityReport {
    pub fn compute(features: &DMatrix<f64>, labels: &DVector<f64>) -> Result<Self> {
        Ok(Self {
            icd: icd(features, labels)?,
            fdr: fdr(features, labels)?,
            chi: chi(features, labels)?,
            dbi: dbi(features, labels)?,
        })
    }
}

pub fn accuracy(predicted: &DVector<f64>, actual: &DVector<f64>) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predicted.len(),
            actual.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty set".into()));
    }
    let hits = predicted.iter().zip(actual.iter()).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / actual.len() as f64)
}

/// Projects every target onto the top two principal axes of `reference`,
/// centred by the reference mean. Returns `2×N` coordinate matrices.
pub fn pca_project(reference: &DMatrix<f64>, targets: &[&DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
    let (d, n) = reference.shape();
    if d < 2 || n < 2 {
        return Err(Error::Degenerate(
            "PCA needs at least two features and two samples".into(),
        ));
    }
    let mean = reference.column_mean();
    let centred = reference - &mean * DVector::from_element(n, 1.0).transpose();
    let cov = &centred * centred.transpose() / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    if !(eig.eigenvalues[order[1]] > 1e-12 * top.max(f64::MIN_POSITIVE)) {
        return Err(Error::Degenerate("reference covariance has rank below 2".into()));
    }
    let basis = DMatrix::from_columns(&[eig.eigenvectors.column(order[0]), eig.eigenvectors.column(order[1])]);
    targets
        .iter()
        .map(|t| {
            if t.nrows() != d {
                return Err(Error::Shape(format!(
                    "target with {} features, reference has {d}",
                    t.nrows()
                )));
            }
            let ones = DVector::from_element(t.ncols(), 1.0);
            Ok(basis.tr_mul(&(*t - &mean * ones.transpose())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn error_examples() {
        let truth = DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        let mut mask = DMatrix::from_element(2, 2, true);
        let k = KernelSpec::gaussian(1.0);
        let r = imputation_errors(&truth, &truth, &mask, &k).unwrap();
        assert_eq!((r.e_x_max, r.e_x_mean, r.e_k_max, r.e_k_mean), (0.0, 0.0, 0.0, 0.0));
        assert!(r.no_masked_positions);
        mask[(1, 0)] = false;
        let mut imputed = truth.clone();
        imputed[(1, 0)] += 0.1;
        let r = imputation_errors(&imputed, &truth, &mask, &k).unwrap();
        assert!((r.e_x_max - 0.1).abs() < 1e-12 && (r.e_x_mean - 0.1).abs() < 1e-12);
        assert!(r.e_k_max > 0.0 && r.e_k_max >= r.e_k_mean);
    }

    #[test]
    fn icd_examples() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!((icd(&x, &labels(&[1.0, -1.0])).unwrap() - 1.0).abs() < 1e-15);
        let same = DMatrix::from_row_slice(1, 4, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(icd(&same, &labels(&[1.0, 1.0, -1.0, -1.0])).unwrap(), 0.0);
        assert!(icd(&same, &labels(&[1.0; 4])).is_err());
    }

    #[test]
    fn fdr_hand_computed() {
        // Classes at ±1 with jitter ±e: Tr S_b = 4, Tr S_w = 4e².
        let e = 0.01;
        let x = DMatrix::from_row_slice(1, 4, &[-1.0 - e, -1.0 + e, 1.0 - e, 1.0 + e]);
        let y = labels(&[-1.0, -1.0, 1.0, 1.0]);
        assert!((fdr(&x, &y).unwrap() - 1.0 / (e * e)).abs() < 1e-6);
        assert!((chi(&x, &y).unwrap() - 2.0 * fdr(&x, &y).unwrap()).abs() < 1e-9);
        let same = DMatrix::from_row_slice(1, 4, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(fdr(&same, &y).unwrap(), 0.0);
        let flat = DMatrix::from_row_slice(1, 4, &[0.0, 0.0, 1.0, 1.0]);
        assert!(fdr(&flat, &y).is_err());
    }

    #[test]
    fn dbi_examples() {
        let x = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        assert_eq!(dbi(&x, &labels(&[1.0, -1.0])).unwrap(), 0.0);
        let x = DMatrix::from_row_slice(2, 4, &[0.0, 0.2, 1.0, 1.5, 0.1, 0.0, 1.0, 0.7]);
        let y = labels(&[1.0, 1.0, -1.0, -1.0]);
        let flipped = -&y;
        assert!((dbi(&x, &y).unwrap() - dbi(&x, &flipped).unwrap()).abs() < 1e-15);
        let x = DMatrix::from_row_slice(1, 4, &[0.0, 1.0, 1.0, 0.0]);
        assert!(dbi(&x, &y).is_err());
    }

    #[test]
    fn accuracy_examples() {
        let a = labels(&[1.0, -1.0, 1.0, -1.0]);
        assert_eq!(accuracy(&a, &a).unwrap(), 1.0);
        assert_eq!(accuracy(&-&a, &a).unwrap(), 0.0);
        assert_eq!(accuracy(&labels(&[1.0, -1.0, -1.0, 1.0]), &a).unwrap(), 0.5);
        assert!(accuracy(&labels(&[1.0]), &a).is_err());
    }

    #[test]
    fn pca_self_projection_has_top_variances() {
        let x = DMatrix::from_row_slice(
            3,
            5,
            &[
                0.1, 0.5, 0.9, 0.3, 0.7, //
                0.2, 0.1, 0.4, 0.8, 0.6, //
                0.0, 0.3, 0.1, 0.2, 0.5,
            ],
        );
        let out = pca_project(&x, &[&x, &x]).unwrap();
        assert_eq!(out[0], out[1]);
        let mean = x.column_mean();
        let c = &x - &mean * DVector::from_element(5, 1.0).transpose();
        let mut ev: Vec<f64> = SymmetricEigen::new(&c * c.transpose() / 4.0)
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        for (axis, expected) in ev.iter().take(2).enumerate() {
            let var = out[0].row(axis).norm_squared() / 4.0;
            assert!((var - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn pca_exact_on_planar_data() {
        // Points in the plane spanned by (1,1,0) and (0,1,1), shifted.
        let coeffs = [(0.1, 0.3), (0.5, -0.2), (-0.4, 0.6), (0.2, 0.2), (0.9, -0.5)];
        let x = DMatrix::from_fn(3, 5, |r, c| {
            let (a, b) = coeffs[c];
            let v = [a, a + b, b];
            v[r] + 0.25
        });
        let out = pca_project(&x, &[&x]).unwrap();
        let mean = x.column_mean();
        let cov = {
            let c = &x - &mean * DVector::from_element(5, 1.0).transpose();
            &c * c.transpose()
        };
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let basis = DMatrix::from_columns(&[eig.eigenvectors.column(order[0]), eig.eigenvectors.column(order[1])]);
        let recon = &basis * &out[0] + &mean * DVector::from_element(5, 1.0).transpose();
        assert!((recon - x).amax() < 1e-10);
        let line = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 2.0, 0.0, 2.0, 4.0]);
        assert!(pca_project(&line, &[&line]).is_err());
    }
}
