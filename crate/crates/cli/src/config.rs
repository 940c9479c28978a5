//! Experiment configuration as flat TOML.
//!
//! Tables prefix their keys (`[stage1]` then `max_iters = 50` is
//! `stage1.max_iters`), as do dotted keys. Lists are TOML arrays; optional
//! values take the string `"auto"`. [`ExperimentConfig::render`] writes every
//! resolved key, so a manifest can be fed back through `--config` to repeat a
//! run.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use kimpute::dataset::{
    generate_synthetic, load_csv, load_libsvm, scale_min_max, IncompleteDataset, MinMaxScaling, SplitSpec,
    SyntheticSpec,
};
use kimpute::pipeline::{power_grid, Classifier, EvaluationConfig, TwoStageSettings};

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    /// Min-max scale loaded files to [0, 1] using observed entries.
    pub scale: bool,
    pub missing_ratio: f64,
    pub seed: u64,
    pub repeats: usize,
    /// Explicit repeat seeds; when empty they run from `seed` upwards.
    pub seeds: Vec<u64>,
    pub c: f64,
    pub gamma: f64,
    /// Stage-I `η` for `impute`; defaults to the norm of the warm-start `α`.
    pub eta: Option<f64>,
    pub c_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub refine_factors: Vec<f64>,
    pub split: SplitSpec,
    pub subsets: usize,
    pub allow_large: bool,
    pub settings: TwoStageSettings,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synthetic(SyntheticSpec::default()),
            scale: true,
            missing_ratio: 0.6,
            seed: 0,
            repeats: 10,
            seeds: Vec::new(),
            c: 1.0,
            gamma: 1.0,
            eta: None,
            c_grid: power_grid(-5, 5),
            gamma_grid: power_grid(-5, 5),
            refine_factors: vec![1.0, 0.5, 2.0],
            split: SplitSpec::standard(0),
            subsets: 1,
            allow_large: false,
            settings: TwoStageSettings::default(),
            out: None,
        }
    }
}

fn parse_bool(v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => bail!("expected a boolean, got '{v}'"),
    }
}

fn parse_num<T: std::str::FromStr>(v: &str) -> Result<T>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    v.parse::<T>().with_context(|| format!("invalid number '{v}'"))
}

fn parse_list<T: std::str::FromStr>(v: &str) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse_num)
        .collect()
}

fn parse_optional(v: &str) -> Result<Option<f64>> {
    if v.eq_ignore_ascii_case("auto") {
        Ok(None)
    } else {
        parse_num(v).map(Some)
    }
}

/// A TOML scalar or array in the string form `set` accepts.
fn flatten_value(v: &toml::Value) -> Result<String> {
    Ok(match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(b) => b.to_string(),
        toml::Value::Array(items) => items.iter().map(flatten_value).collect::<Result<Vec<_>>>()?.join(","),
        other => bail!("unsupported value {other}"),
    })
}

fn flatten(table: &toml::Table, prefix: &str, out: &mut Vec<(String, String)>) -> Result<()> {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(inner) => flatten(inner, &key, out)?,
            _ => out.push((key.clone(), flatten_value(v).with_context(|| format!("key '{key}'"))?)),
        }
    }
    Ok(())
}

fn int(v: impl TryInto<i64>) -> toml::Value {
    toml::Value::Integer(v.try_into().unwrap_or(i64::MAX))
}

fn floats(values: &[f64]) -> toml::Value {
    toml::Value::Array(values.iter().map(|&v| toml::Value::Float(v)).collect())
}

fn optional(v: Option<f64>) -> toml::Value {
    v.map_or_else(|| toml::Value::String("auto".into()), toml::Value::Float)
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config = Self::default();
        config
            .apply_text(&text)
            .with_context(|| format!("in {}", path.display()))?;
        Ok(config)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let table: toml::Table = text.parse()?;
        let mut pairs = Vec::new();
        flatten(&table, "", &mut pairs)?;
        for (key, value) in pairs {
            self.set(&key, &value).with_context(|| format!("key '{key}'"))?;
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| anyhow!("override '{assignment}' is not key=value"))?;
        self.set(key.trim(), value.trim())
    }

    fn synthetic_mut(&mut self) -> &mut SyntheticSpec {
        if !matches!(self.data, DataSource::Synthetic(_)) {
            self.data = DataSource::Synthetic(SyntheticSpec::default());
        }
        match &mut self.data {
            DataSource::Synthetic(spec) => spec,
            DataSource::File(_) => unreachable!(),
        }
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "dataset" => {
                self.data = if v == "synthetic" {
                    DataSource::Synthetic(SyntheticSpec::default())
                } else {
                    DataSource::File(PathBuf::from(v))
                }
            }
            "scale" => self.scale = parse_bool(v)?,
            "synthetic.n_per_class" => self.synthetic_mut().n_per_class = parse_num(v)?,
            "synthetic.dim" => self.synthetic_mut().dim = parse_num(v)?,
            "synthetic.noise_intensity" => self.synthetic_mut().noise_intensity = parse_num(v)?,
            "synthetic.outlier_fraction" => self.synthetic_mut().outlier_fraction = parse_num(v)?,
            "synthetic.non_uniformity" => self.synthetic_mut().non_uniformity = parse_num(v)?,
            "synthetic.seed" => self.synthetic_mut().seed = parse_num(v)?,
            "missing_ratio" => self.missing_ratio = parse_num(v)?,
            "seed" => self.seed = parse_num(v)?,
            "repeats" => self.repeats = parse_num(v)?,
            "seeds" => self.seeds = parse_list(v)?,
            "c" => self.c = parse_num(v)?,
            "gamma" => self.gamma = parse_num(v)?,
            "eta" => self.eta = parse_optional(v)?,
            "rho" => self.settings.rho = parse_optional(v)?,
            "c_grid" => self.c_grid = parse_list(v)?,
            "gamma_grid" => self.gamma_grid = parse_list(v)?,
            "refine_factors" => self.refine_factors = parse_list(v)?,
            "split.train" => self.split.train_fraction = parse_num(v)?,
            "split.holdout" => self.split.holdout_fraction = parse_num(v)?,
            "split.test" => self.split.test_fraction = parse_num(v)?,
            "subsets" => self.subsets = parse_num(v)?,
            "allow_large" => self.allow_large = parse_bool(v)?,
            "classifier" => self.settings.classifier = v.parse::<Classifier>()?,
            "out" => self.out = Some(PathBuf::from(v)),
            "stage1.max_iters" => self.settings.stage1.max_iters = parse_num(v)?,
            "stage1.loss_tol" => self.settings.stage1.loss_tol = parse_num(v)?,
            "stage1.alpha_steps_per_iter" => self.settings.stage1.alpha_steps_per_iter = parse_num(v)?,
            "stage1.base_step_factor" => self.settings.stage1.base_step_factor = parse_num(v)?,
            "stage1.refit_alpha" => self.settings.stage1.refit_alpha = parse_bool(v)?,
            "qp.kkt_tol" => self.settings.stage1.qp.kkt_tol = parse_num(v)?,
            "qp.max_iters" => {
                self.settings.stage1.qp.max_iters = if v.eq_ignore_ascii_case("auto") {
                    None
                } else {
                    Some(parse_num(v)?)
                }
            }
            "qp.feasibility_tol" => self.settings.stage1.qp.feasibility_tol = parse_num(v)?,
            "qp.penalty_weight" => self.settings.stage1.qp.penalty_weight = parse_num(v)?,
            "qp.fallback_max_iters" => self.settings.stage1.qp.fallback_max_iters = parse_num(v)?,
            "stage2.max_sweeps" => self.settings.stage2.max_sweeps = parse_num(v)?,
            "stage2.per_column_steps" => self.settings.stage2.per_column_steps = parse_num(v)?,
            "stage2.obj_tol" => self.settings.stage2.obj_tol = parse_num(v)?,
            "stage2.kernel_floor" => self.settings.stage2.kernel_floor = parse_num(v)?,
            "svm.blocks" => self.settings.svm.blocks = parse_num(v)?,
            "svm.steps_per_block" => self.settings.svm.steps_per_block = parse_num(v)?,
            "svm.base_step_factor" => self.settings.svm.base_step_factor = parse_num(v)?,
            _ => bail!("unknown key '{key}'"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_grid.is_empty() || self.gamma_grid.is_empty() || self.refine_factors.is_empty() {
            bail!("c_grid, gamma_grid and refine_factors must be non-empty");
        }
        if self.repeats == 0 && self.seeds.is_empty() {
            bail!("repeats must be at least 1");
        }
        if self.subsets == 0 {
            bail!("subsets must be at least 1");
        }
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(anyhow!("{name} must be positive and finite, got {v}"))
            }
        };
        positive("c", self.c)?;
        positive("gamma", self.gamma)?;
        for &v in self.c_grid.iter().chain(&self.gamma_grid).chain(&self.refine_factors) {
            positive("grid value", v)?;
        }
        if let Some(eta) = self.eta {
            positive("eta", eta)?;
        }
        if let Some(rho) = self.settings.rho {
            positive("rho", rho)?;
        }
        if !(0.0..1.0).contains(&self.missing_ratio) {
            bail!("missing_ratio must lie in [0, 1), got {}", self.missing_ratio);
        }
        self.split.validate()?;
        Ok(())
    }

    pub fn resolved_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.repeats as u64).map(|k| self.seed + k).collect()
        } else {
            self.seeds.clone()
        }
    }

    /// Loads the configured data, scaled to [0, 1] unless disabled.
    pub fn load(&self) -> Result<(IncompleteDataset, Option<MinMaxScaling>)> {
        match &self.data {
            DataSource::Synthetic(spec) => {
                let data = generate_synthetic(spec)?;
                Ok((data.dataset, Some(data.scaling)))
            }
            DataSource::File(path) => {
                let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
                let raw = if is_csv {
                    load_csv(path)
                } else {
                    load_libsvm(path, None)
                }
                .with_context(|| format!("loading {}", path.display()))?;
                if self.scale {
                    let (scaled, scaling) = scale_min_max(&raw)?;
                    Ok((scaled, Some(scaling)))
                } else {
                    Ok((raw, None))
                }
            }
        }
    }

    pub fn evaluation(&self) -> EvaluationConfig {
        EvaluationConfig {
            missing_ratio: self.missing_ratio,
            c_grid: self.c_grid.clone(),
            gamma_grid: self.gamma_grid.clone(),
            refine_factors: self.refine_factors.clone(),
            seeds: self.resolved_seeds(),
            subsets: self.subsets,
            allow_large: self.allow_large,
            split: self.split,
            settings: self.settings.clone(),
        }
    }

    /// Every setting as TOML. `out` is omitted.
    pub fn render(&self) -> String {
        let mut root = toml::Table::new();
        let mut put = |key: &str, v: toml::Value| {
            let (section, name) = key.split_once('.').map_or((None, key), |(s, n)| (Some(s), n));
            let table = match section {
                None => &mut root,
                Some(s) => root
                    .entry(s)
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .expect("section is a table"),
            };
            table.insert(name.to_string(), v);
        };
        let string = |s: &str| toml::Value::String(s.to_string());
        match &self.data {
            DataSource::Synthetic(spec) => {
                put("dataset", string("synthetic"));
                put("synthetic.n_per_class", int(spec.n_per_class));
                put("synthetic.dim", int(spec.dim));
                put("synthetic.noise_intensity", toml::Value::Float(spec.noise_intensity));
                put("synthetic.outlier_fraction", toml::Value::Float(spec.outlier_fraction));
                put("synthetic.non_uniformity", toml::Value::Float(spec.non_uniformity));
                put("synthetic.seed", int(spec.seed));
            }
            DataSource::File(path) => put("dataset", string(&path.display().to_string())),
        }
        let s1 = &self.settings.stage1;
        put("scale", toml::Value::Boolean(self.scale));
        put("missing_ratio", toml::Value::Float(self.missing_ratio));
        put("seed", int(self.seed));
        put("repeats", int(self.repeats));
        put(
            "seeds",
            toml::Value::Array(self.resolved_seeds().into_iter().map(int).collect()),
        );
        put("c", toml::Value::Float(self.c));
        put("gamma", toml::Value::Float(self.gamma));
        put("eta", optional(self.eta));
        put("rho", optional(self.settings.rho));
        put("c_grid", floats(&self.c_grid));
        put("gamma_grid", floats(&self.gamma_grid));
        put("refine_factors", floats(&self.refine_factors));
        put("split.train", toml::Value::Float(self.split.train_fraction));
        put("split.holdout", toml::Value::Float(self.split.holdout_fraction));
        put("split.test", toml::Value::Float(self.split.test_fraction));
        put("subsets", int(self.subsets));
        put("allow_large", toml::Value::Boolean(self.allow_large));
        put("classifier", string(self.settings.classifier.name()));
        put("stage1.max_iters", int(s1.max_iters));
        put("stage1.loss_tol", toml::Value::Float(s1.loss_tol));
        put("stage1.alpha_steps_per_iter", int(s1.alpha_steps_per_iter));
        put("stage1.base_step_factor", toml::Value::Float(s1.base_step_factor));
        put("stage1.refit_alpha", toml::Value::Boolean(s1.refit_alpha));
        put("qp.kkt_tol", toml::Value::Float(s1.qp.kkt_tol));
        put("qp.max_iters", s1.qp.max_iters.map_or_else(|| string("auto"), int));
        put("qp.feasibility_tol", toml::Value::Float(s1.qp.feasibility_tol));
        put("qp.penalty_weight", toml::Value::Float(s1.qp.penalty_weight));
        put("qp.fallback_max_iters", int(s1.qp.fallback_max_iters));
        put("stage2.max_sweeps", int(self.settings.stage2.max_sweeps));
        put("stage2.per_column_steps", int(self.settings.stage2.per_column_steps));
        put("stage2.obj_tol", toml::Value::Float(self.settings.stage2.obj_tol));
        put(
            "stage2.kernel_floor",
            toml::Value::Float(self.settings.stage2.kernel_floor),
        );
        put("svm.blocks", int(self.settings.svm.blocks));
        put("svm.steps_per_block", int(self.settings.svm.steps_per_block));
        put(
            "svm.base_step_factor",
            toml::Value::Float(self.settings.svm.base_step_factor),
        );
        toml::to_string(&root).expect("config tables serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_prefix_keys() {
        let mut c = ExperimentConfig::default();
        c.apply_text(
            "missing_ratio = 0.3 # inline\nstage2.max_sweeps = 3\n[stage1]\nmax_iters = 7\n[synthetic]\ndim = 4\n",
        )
        .unwrap();
        assert_eq!(c.settings.stage2.max_sweeps, 3);
        assert_eq!(c.missing_ratio, 0.3);
        assert_eq!(c.settings.stage1.max_iters, 7);
        assert_eq!(
            c.data,
            DataSource::Synthetic(SyntheticSpec {
                dim: 4,
                ..SyntheticSpec::default()
            })
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut c = ExperimentConfig::default();
        assert!(c.apply_text("colour = \"blue\"").is_err());
        assert!(c.apply_text("c = [").is_err());
        assert!(c.apply_override("c").is_err());
    }

    #[test]
    fn render_round_trips() {
        let mut c = ExperimentConfig::default();
        c.apply_text("c_grid = [0.25, 1]\neta = 3.5\nclassifier = \"retrain\"\nqp.max_iters = 40\nseed = 9\nrepeats = 2\nrho = \"auto\"").unwrap();
        let mut back = ExperimentConfig::default();
        back.apply_text(&c.render()).unwrap();
        // Rendering pins the implicit seed list.
        c.seeds = vec![9, 10];
        assert_eq!(back, c);
    }

    #[test]
    fn seeds_default_to_a_range() {
        let c = ExperimentConfig {
            seed: 5,
            repeats: 3,
            ..ExperimentConfig::default()
        };
        assert_eq!(c.resolved_seeds(), vec![5, 6, 7]);
    }

    #[test]
    fn validation_catches_bad_values() {
        let c = ExperimentConfig {
            c_grid: vec![],
            ..ExperimentConfig::default()
        };
        assert!(c.validate().is_err());
        let c = ExperimentConfig {
            missing_ratio: 1.0,
            ..ExperimentConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(ExperimentConfig::default().validate().is_ok());
    }
}
