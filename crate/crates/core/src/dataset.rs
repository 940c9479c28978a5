//! Incomplete datasets: loading, scaling, splitting, synthesis and missingness.
//!
//! Features are stored column-per-sample as a `d × N` matrix. Missing entries
//! are tracked by a boolean mask of the same shape (`true` = observed) and
//! always hold `0.0` in the value matrix.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Seedable generator used by every stochastic operation in the crate.
pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncompleteDataset {
    values: DMatrix<f64>,
    mask: DMatrix<bool>,
    labels: DVector<f64>,
}

impl IncompleteDataset {
    /// Builds a dataset, zeroing every masked-out value.
    pub fn new(mut values: DMatrix<f64>, mask: DMatrix<bool>, labels: DVector<f64>) -> Result<Self> {
        if values.shape() != mask.shape() {
            return Err(Error::Shape(format!(
                "values are {:?} but mask is {:?}",
                values.shape(),
                mask.shape()
            )));
        }
        if labels.len() != values.ncols() {
            return Err(Error::Shape(format!(
                "{} labels for {} samples",
                labels.len(),
                values.ncols()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l != 1.0 && l != -1.0) {
            return Err(Error::Label(format!("label {bad} is not -1 or +1")));
        }
        for (v, &observed) in values.iter_mut().zip(mask.iter()) {
            if !observed {
                *v = 0.0;
            } else if !v.is_finite() {
                return Err(Error::NonFinite("dataset values"));
            }
        }
        Ok(Self { values, mask, labels })
    }

    /// A dataset with every entry observed.
    pub fn complete(values: DMatrix<f64>, labels: DVector<f64>) -> Result<Self> {
        let mask = DMatrix::from_element(values.nrows(), values.ncols(), true);
        Self::new(values, mask, labels)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    pub fn n_features(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_observed(&self, feature: usize, sample: usize) -> bool {
        self.mask[(feature, sample)]
    }

    pub fn missing_count(&self) -> usize {
        self.mask.iter().filter(|&&o| !o).count()
    }

    /// Fraction of masked entries; 0 for an empty dataset.
    pub fn missing_ratio(&self) -> f64 {
        let total = self.mask.len();
        if total == 0 {
            0.0
        } else {
            self.missing_count() as f64 / total as f64
        }
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|&o| o)
    }

    /// Indices of observed features of one sample.
    pub fn observed_features(&self, sample: usize) -> Vec<usize> {
        (0..self.n_features()).filter(|&p| self.mask[(p, sample)]).collect()
    }

    /// Keeps the given sample columns, in order.
    pub fn select(&self, samples: &[usize]) -> Self {
        let d = self.n_features();
        let values = DMatrix::from_fn(d, samples.len(), |p, k| self.values[(p, samples[k])]);
        let mask = DMatrix::from_fn(d, samples.len(), |p, k| self.mask[(p, samples[k])]);
        let labels = DVector::from_fn(samples.len(), |k, _| self.labels[samples[k]]);
        Self { values, mask, labels }
    }

    /// Column-wise concatenation of datasets sharing a feature count.
    pub fn concat(parts: &[Self]) -> Result<Self> {
        let d = parts.first().map_or(0, Self::n_features);
        if parts.iter().any(|p| p.n_features() != d) {
            return Err(Error::Shape("feature counts differ between parts".into()));
        }
        let n: usize = parts.iter().map(Self::n_samples).sum();
        let mut values = DMatrix::zeros(d, n);
        let mut mask = DMatrix::from_element(d, n, true);
        let mut labels = DVector::zeros(n);
        let mut offset = 0;
        for part in parts {
            let k = part.n_samples();
            values.columns_mut(offset, k).copy_from(&part.values);
            mask.columns_mut(offset, k).copy_from(&part.mask);
            labels.rows_mut(offset, k).copy_from(&part.labels);
            offset += k;
        }
        Ok(Self { values, mask, labels })
    }
}

/// Maps a raw label column onto {-1, +1}.
///
/// Accepts {-1,+1} as is, {0,1} with 0 → -1, and otherwise any two distinct
/// values with the smaller one mapped to -1.
fn normalize_labels(raw: &[f64]) -> Result<Vec<f64>> {
    let mut distinct: Vec<f64> = Vec::new();
    for &l in raw {
        if !l.is_finite() {
            return Err(Error::Label(format!("non-finite label {l}")));
        }
        if !distinct.contains(&l) {
            distinct.push(l);
            if distinct.len() > 2 {
                return Err(Error::Label(format!("more than two distinct labels: {:?}", distinct)));
            }
        }
    }
    let all_in = |set: &[f64]| distinct.iter().all(|l| set.contains(l));
    if all_in(&[-1.0, 1.0]) {
        return Ok(raw.to_vec());
    }
    if all_in(&[0.0, 1.0]) {
        return Ok(raw.iter().map(|&l| if l == 0.0 { -1.0 } else { 1.0 }).collect());
    }
    if distinct.len() < 2 {
        return Err(Error::Label(format!(
            "single label value {:?} cannot be mapped to ±1",
            distinct
        )));
    }
    let low = distinct[0].min(distinct[1]);
    Ok(raw.iter().map(|&l| if l == low { -1.0 } else { 1.0 }).collect())
}

/// Parses libsvm text (`label index:value ...`, 1-based indices).
///
/// Absent indices are observed zeros. `n_features` pads the dimension beyond
/// the largest index seen.
pub fn parse_libsvm(text: &str, n_features: Option<usize>) -> Result<IncompleteDataset> {
    let mut raw_labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_index = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_token = tokens.next().unwrap_or_default();
        let label: f64 = label_token.parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("invalid label {label_token:?}"),
        })?;
        let mut entries = Vec::new();
        for token in tokens {
            let (idx, val) = token.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected index:value, got {token:?}"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid index {idx:?}"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: line_no,
                    message: "indices are 1-based".into(),
                });
            }
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid value {val:?}"),
            })?;
            if !val.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("non-finite value {val}"),
                });
            }
            max_index = max_index.max(idx);
            entries.push((idx - 1, val));
        }
        raw_labels.push(label);
        rows.push(entries);
    }
    let d = match n_features {
        Some(d) if d < max_index => {
            return Err(Error::InvalidArgument(format!(
                "file uses feature index {max_index} but {d} features were requested"
            )))
        }
        Some(d) => d,
        None => max_index,
    };
    let labels = normalize_labels(&raw_labels)?;
    let mut values = DMatrix::zeros(d, rows.len());
    for (i, entries) in rows.iter().enumerate() {
        for &(p, v) in entries {
            values[(p, i)] = v;
        }
    }
    IncompleteDataset::complete(values, DVector::from_vec(labels))
}

pub fn load_libsvm(path: impl AsRef<Path>, n_features: Option<usize>) -> Result<IncompleteDataset> {
    let text = std::fs::read_to_string(path)?;
    parse_libsvm(&text, n_features)
}

/// Parses CSV with a header row. The label column is the one named `label`
/// (case-insensitive), or the last column. `NA` cells are missing.
pub fn parse_csv(text: &str) -> Result<IncompleteDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let csv_error = |e: csv::Error| Error::Parse {
        line: e.position().map_or(0, |p| p.line() as usize),
        message: e.to_string(),
    };
    let columns: Vec<String> = reader
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(str::to_string)
        .collect();
    if columns.is_empty() {
        return IncompleteDataset::complete(DMatrix::zeros(0, 0), DVector::zeros(0));
    }
    let label_col = columns
        .iter()
        .position(|c| c.eq_ignore_ascii_case("label"))
        .unwrap_or(columns.len() - 1);
    let d = columns.len() - 1;

    let mut raw_labels = Vec::new();
    let mut cells: Vec<Option<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line_no = record.position().map_or(0, |p| p.line() as usize);
        for (c, field) in record.iter().enumerate() {
            let parsed = if field.eq_ignore_ascii_case("NA") {
                None
            } else {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("invalid number {field:?}"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("non-finite value {field:?}"),
                    });
                }
                Some(v)
            };
            if c == label_col {
                raw_labels.push(parsed.ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: "label cannot be NA".into(),
                })?);
            } else {
                cells.push(parsed);
            }
        }
    }
    let n = raw_labels.len();
    let labels = normalize_labels(&raw_labels)?;
    let values = DMatrix::from_fn(d, n, |p, i| cells[i * d + p].unwrap_or(0.0));
    let mask = DMatrix::from_fn(d, n, |p, i| cells[i * d + p].is_some());
    for i in 0..n {
        if d > 0 && (0..d).all(|p| !mask[(p, i)]) {
            return Err(Error::EmptySample { sample: i });
        }
    }
    IncompleteDataset::new(values, mask, DVector::from_vec(labels))
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<IncompleteDataset> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text)
}

/// Per-feature affine map computed from observed entries.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaling {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaling {
    fn scale_value(&self, p: usize, v: f64) -> f64 {
        let range = self.max[p] - self.min[p];
        if range > 0.0 {
            (v - self.min[p]) / range
        } else {
            0.0
        }
    }

    /// Applies the map to a complete matrix (e.g. a holdout or test split).
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |p, i| self.scale_value(p, x[(p, i)]))
    }

    /// Inverse map. Constant features come back as their constant.
    pub fn invert(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |p, i| {
            self.min[p] + x[(p, i)] * (self.max[p] - self.min[p])
        })
    }
}

/// Scales observed entries of every feature to [0, 1].
///
/// A constant feature maps to 0. A feature with no observed entry is an error.
pub fn scale_min_max(ds: &IncompleteDataset) -> Result<(IncompleteDataset, MinMaxScaling)> {
    let d = ds.n_features();
    let mut min = vec![f64::INFINITY; d];
    let mut max = vec![f64::NEG_INFINITY; d];
    for p in 0..d {
        for i in 0..ds.n_samples() {
            if ds.mask[(p, i)] {
                min[p] = min[p].min(ds.values[(p, i)]);
                max[p] = max[p].max(ds.values[(p, i)]);
            }
        }
        if min[p] > max[p] {
            return Err(Error::EmptyFeature { feature: p });
        }
    }
    let scaling = MinMaxScaling { min, max };
    let values = DMatrix::from_fn(d, ds.n_samples(), |p, i| {
        if ds.mask[(p, i)] {
            scaling.scale_value(p, ds.values[(p, i)])
        } else {
            0.0
        }
    });
    let scaled = IncompleteDataset {
        values,
        mask: ds.mask.clone(),
        labels: ds.labels.clone(),
    };
    Ok((scaled, scaling))
}

/// Masks exactly `round(N·d·m)` uniformly chosen entries (MCAR).
pub fn apply_mcar(ds: &IncompleteDataset, missing_ratio: f64, seed: u64) -> Result<IncompleteDataset> {
    if !(0.0..1.0).contains(&missing_ratio) {
        return Err(Error::InvalidArgument(format!(
            "missing ratio must lie in [0, 1), got {missing_ratio}"
        )));
    }
    let total = ds.values.len();
    let count = (total as f64 * missing_ratio).round() as usize;
    if count == 0 {
        return Ok(ds.clone());
    }
    if !ds.is_complete() {
        return Err(Error::InvalidArgument(
            "MCAR masking requires a fully observed dataset".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let mut out = ds.clone();
    for flat in rand::seq::index::sample(&mut rng, total, count) {
        // nalgebra storage is column-major, matching the flat index.
        out.mask.as_mut_slice()[flat] = false;
        out.values.as_mut_slice()[flat] = 0.0;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub holdout_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    /// The 4:3:3 train/holdout/test protocol.
    pub fn standard(seed: u64) -> Self {
        Self {
            train_fraction: 0.4,
            holdout_fraction: 0.3,
            test_fraction: 0.3,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let f = [self.train_fraction, self.holdout_fraction, self.test_fraction];
        if f.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidArgument("split fractions must be nonnegative".into()));
        }
        let sum: f64 = f.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Subset sizes by largest-remainder rounding; ties go to the earlier subset.
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        let fractions = [self.train_fraction, self.holdout_fraction, self.test_fraction];
        let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
        let mut sizes = [0usize; 3];
        for k in 0..3 {
            sizes[k] = exact[k].floor() as usize;
        }
        let assigned: usize = sizes.iter().sum();
        let mut order: Vec<usize> = (0..3).collect();
        // Stable sort keeps the earlier subset first among equal remainders.
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
        });
        for &k in order.iter().take(n.saturating_sub(assigned)) {
            sizes[k] += 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: IncompleteDataset,
    pub holdout: IncompleteDataset,
    pub test: IncompleteDataset,
    pub train_indices: Vec<usize>,
    pub holdout_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Shuffles samples with the spec's seed and partitions them.
pub fn split(ds: &IncompleteDataset, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let n = ds.n_samples();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("cannot split {n} samples three ways")));
    }
    let sizes = spec.sizes(n);
    if sizes.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "split sizes {sizes:?} leave a subset empty"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(spec.seed));
    let train_indices = order[..sizes[0]].to_vec();
    let holdout_indices = order[sizes[0]..sizes[0] + sizes[1]].to_vec();
    let test_indices = order[sizes[0] + sizes[1]..].to_vec();
    Ok(Split {
        train: ds.select(&train_indices),
        holdout: ds.select(&holdout_indices),
        test: ds.select(&test_indices),
        train_indices,
        holdout_indices,
        test_indices,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub n_per_class: usize,
    pub dim: usize,
    pub noise_intensity: f64,
    pub outlier_fraction: f64,
    pub non_uniformity: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_per_class: 200,
            dim: 30,
            noise_intensity: 0.2,
            outlier_fraction: 0.1,
            non_uniformity: 0.5,
            seed: 0,
        }
    }
}

/// Output of [`generate_synthetic`]: the scaled dataset plus the map used.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: IncompleteDataset,
    pub scaling: MinMaxScaling,
}

/// Two Gaussian classes centred at -1 and +1 in every coordinate with a shared
/// diagonal covariance `1 + non_uniformity·u`, `u ~ U(0,1)^d`, plus additive
/// noise and uniformly shifted outliers, min-max scaled to [0, 1].
///
/// The first `n_per_class` columns carry label -1, the rest +1.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    if spec.dim == 0 || spec.n_per_class == 0 {
        return Err(Error::InvalidArgument(
            "synthetic data needs dim ≥ 1 and n_per_class ≥ 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&spec.outlier_fraction) {
        return Err(Error::InvalidArgument(format!(
            "outlier fraction {} outside [0, 1]",
            spec.outlier_fraction
        )));
    }
    if spec.noise_intensity < 0.0 || spec.non_uniformity < 0.0 {
        return Err(Error::InvalidArgument(
            "noise and non-uniformity must be nonnegative".into(),
        ));
    }
    let mut rng = rng_from_seed(spec.seed);
    let d = spec.dim;
    let n = 2 * spec.n_per_class;
    let std_dev: Vec<f64> = (0..d)
        .map(|_| (1.0 + spec.non_uniformity * rng.random::<f64>()).sqrt())
        .collect();

    let mut values = DMatrix::zeros(d, n);
    let mut labels = DVector::zeros(n);
    for i in 0..n {
        let (mean, label) = if i < spec.n_per_class { (-1.0, -1.0) } else { (1.0, 1.0) };
        labels[i] = label;
        for p in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            values[(p, i)] = mean + std_dev[p] * z;
        }
    }
    if spec.noise_intensity > 0.0 {
        for v in values.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += spec.noise_intensity * z;
        }
    }
    let n_outliers = (spec.outlier_fraction * n as f64).round() as usize;
    if n_outliers > 0 {
        for i in rand::seq::index::sample(&mut rng, n, n_outliers) {
            for p in 0..d {
                values[(p, i)] += 10.0 * (rng.random::<f64>() - 0.5);
            }
        }
    }
    let raw = IncompleteDataset::complete(values, labels)?;
    let (dataset, scaling) = scale_min_max(&raw)?;
    Ok(SyntheticData { dataset, scaling })
}

/// Per-feature means over observed entries.
pub fn observed_means(ds: &IncompleteDataset) -> Result<Vec<f64>> {
    (0..ds.n_features())
        .map(|p| {
            let (sum, count) = (0..ds.n_samples())
                .filter(|&i| ds.mask[(p, i)])
                .fold((0.0, 0usize), |(s, c), i| (s + ds.values[(p, i)], c + 1));
            if count == 0 {
                Err(Error::EmptyFeature { feature: p })
            } else {
                Ok(sum / count as f64)
            }
        })
        .collect()
}

/// Mean imputation: every missing entry takes its feature's observed mean.
pub fn mean_impute(ds: &IncompleteDataset) -> Result<DMatrix<f64>> {
    let means = observed_means(ds)?;
    Ok(DMatrix::from_fn(ds.n_features(), ds.n_samples(), |p, i| {
        if ds.mask[(p, i)] {
            ds.values[(p, i)]
        } else {
            means[p]
        }
    }))
}

/// Distinct label values present, for sanity checks on splits.
pub fn label_set(ds: &IncompleteDataset) -> BTreeSet<i8> {
    ds.labels.iter().map(|&l| l as i8).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(values: &[f64], mask: &[bool]) -> IncompleteDataset {
        let n = values.len();
        IncompleteDataset::new(
            DMatrix::from_row_slice(1, n, values),
            DMatrix::from_row_slice(1, n, mask),
            DVector::from_element(n, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn libsvm_line_with_gap() {
        let ds = parse_libsvm("+1 1:0.5 3:0.2\n", Some(3)).unwrap();
        assert_eq!(ds.n_features(), 3);
        assert_eq!(ds.values().column(0).as_slice(), &[0.5, 0.0, 0.2]);
        assert_eq!(ds.labels()[0], 1.0);
        assert!(ds.is_complete());
    }

    #[test]
    fn libsvm_empty_file() {
        let ds = parse_libsvm("", None).unwrap();
        assert_eq!(ds.n_samples(), 0);
    }

    #[test]
    fn libsvm_zero_one_labels_are_remapped() {
        let text = "0 1:0.1\n1 2:0.3\n0 1:0.7 2:0.2\n";
        let ds = parse_libsvm(text, None).unwrap();
        assert_eq!(ds.labels().as_slice(), &[-1.0, 1.0, -1.0]);
        assert_eq!(ds.values()[(1, 1)], 0.3);
        assert_eq!(ds.values()[(0, 2)], 0.7);
    }

    #[test]
    fn libsvm_errors() {
        match parse_libsvm("+1 1:0.5\n-1 2-0.3\n", None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(
            parse_libsvm("1 1:1\n2 1:1\n3 1:1\n", None),
            Err(Error::Label(_))
        ));
        assert!(matches!(parse_libsvm("1 0:1\n", None), Err(Error::Parse { .. })));
    }

    #[test]
    fn csv_with_na() {
        let ds = parse_csv("a,b,label\n1,NA,1\n2,3,-1\n").unwrap();
        assert_eq!(ds.n_features(), 2);
        assert!(!ds.is_observed(1, 0));
        assert_eq!(ds.values()[(1, 0)], 0.0);
        assert_eq!(ds.labels().as_slice(), &[1.0, -1.0]);
        assert!(matches!(
            parse_csv("a,label\nNA,1\n"),
            Err(Error::EmptySample { sample: 0 })
        ));
        let quoted = parse_csv("\"a\", \"label\"\n\n 0.5 ,\"1\"\n").unwrap();
        assert_eq!(quoted.values()[(0, 0)], 0.5);
        match parse_csv("a,label\n1,1\n2\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn scaling_examples() {
        let (s, _) = scale_min_max(&row(&[0.2, 0.6, 1.0], &[true; 3])).unwrap();
        let got = s.values().as_slice();
        for (g, e) in got.iter().zip([0.0, 0.5, 1.0]) {
            assert!((g - e).abs() < 1e-15);
        }
        let (s, _) = scale_min_max(&row(&[5.0, 5.0], &[true; 2])).unwrap();
        assert_eq!(s.values().as_slice(), &[0.0, 0.0]);
        let (s, _) = scale_min_max(&row(&[1.0, 9.0, 3.0], &[true, false, true])).unwrap();
        assert_eq!(s.values().as_slice(), &[0.0, 0.0, 1.0]);
        assert_eq!(s.mask().as_slice(), &[true, false, true]);
    }

    #[test]
    fn scaling_rejects_empty_feature() {
        let ds = IncompleteDataset::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[true, true, false, false]),
            DVector::from_vec(vec![1.0, -1.0]),
        )
        .unwrap();
        assert!(matches!(scale_min_max(&ds), Err(Error::EmptyFeature { feature: 1 })));
    }

    #[test]
    fn mcar_counts_and_determinism() {
        let ds = IncompleteDataset::complete(
            DMatrix::from_fn(2, 4, |p, i| (p + i) as f64 / 5.0),
            DVector::from_vec(vec![1.0, -1.0, 1.0, -1.0]),
        )
        .unwrap();
        assert_eq!(apply_mcar(&ds, 0.0, 1).unwrap(), ds);
        let a = apply_mcar(&ds, 0.5, 7).unwrap();
        assert_eq!(a.missing_count(), 4);
        assert_eq!(a.labels(), ds.labels());
        let b = apply_mcar(&ds, 0.5, 7).unwrap();
        assert_eq!(a.mask(), b.mask());
        assert!(apply_mcar(&ds, 1.0, 7).is_err());
    }

    #[test]
    fn split_sizes() {
        assert_eq!(SplitSpec::standard(0).sizes(10), [4, 3, 3]);
        let thirds = SplitSpec {
            train_fraction: 1.0 / 3.0,
            holdout_fraction: 1.0 / 3.0,
            test_fraction: 1.0 / 3.0,
            seed: 0,
        };
        assert_eq!(thirds.sizes(3), [1, 1, 1]);
        // 0.4·11 = 4.4, 0.3·11 = 3.3 twice: remainder 1 goes to train.
        assert_eq!(SplitSpec::standard(0).sizes(11), [5, 3, 3]);
        // remainders tie at .3; the earlier subset wins
        assert_eq!(SplitSpec::standard(0).sizes(1), [1, 0, 0]);
    }

    #[test]
    fn split_is_partition_and_deterministic() {
        let ds = IncompleteDataset::complete(
            DMatrix::from_fn(1, 10, |_, i| i as f64),
            DVector::from_fn(10, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 }),
        )
        .unwrap();
        let s = split(&ds, &SplitSpec::standard(3)).unwrap();
        let mut all: Vec<usize> = s
            .train_indices
            .iter()
            .chain(&s.holdout_indices)
            .chain(&s.test_indices)
            .copied()
            .collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(s.train.n_samples(), 4);
        let again = split(&ds, &SplitSpec::standard(3)).unwrap();
        assert_eq!(s.train_indices, again.train_indices);
        let too_small = ds.select(&[0, 1]);
        assert!(split(&too_small, &SplitSpec::standard(3)).is_err());
    }

    #[test]
    fn mean_impute_examples() {
        let got = mean_impute(&row(&[0.2, 0.0, 0.8], &[true, false, true])).unwrap();
        assert!((got[(0, 1)] - 0.5).abs() < 1e-15);
        let full = row(&[0.1, 0.3], &[true, true]);
        assert_eq!(mean_impute(&full).unwrap(), *full.values());
        let got = mean_impute(&row(&[0.0, 0.4], &[false, true])).unwrap();
        assert_eq!(got.as_slice(), &[0.4, 0.4]);
        assert!(mean_impute(&row(&[0.0, 0.0], &[false, false])).is_err());
    }

    #[test]
    fn synthetic_is_reproducible() {
        let spec = SyntheticSpec {
            n_per_class: 10,
            dim: 3,
            seed: 5,
            ..Default::default()
        };
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.dataset.n_samples(), 20);
        assert!(a.dataset.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(label_set(&a.dataset), [-1i8, 1].into_iter().collect());
    }

    #[test]
    fn synthetic_full_outliers_shift_every_sample() {
        // Same seed, outliers on vs off: with fraction 1 every column moves.
        let base = SyntheticSpec {
            n_per_class: 5,
            dim: 4,
            noise_intensity: 0.0,
            outlier_fraction: 0.0,
            non_uniformity: 0.0,
            seed: 11,
        };
        let clean = generate_synthetic(&base).unwrap();
        let shifted = generate_synthetic(&SyntheticSpec {
            outlier_fraction: 1.0,
            ..base
        })
        .unwrap();
        let raw_clean = clean.scaling.invert(clean.dataset.values());
        let raw_shifted = shifted.scaling.invert(shifted.dataset.values());
        for i in 0..10 {
            let moved = (0..4).any(|p| (raw_clean[(p, i)] - raw_shifted[(p, i)]).abs() > 1e-9);
            assert!(moved, "sample {i} was not shifted");
        }
    }
}
