//! Output directory handling and CSV writers.
//!
//! Floats are written with `{:e}`: shortest round-trip scientific notation,
//! independent of locale.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kimpute::nalgebra::{DMatrix, DVector};

pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    /// Creates `root`, refusing to reuse a non-empty directory unless `force`.
    pub fn create(root: &Path, force: bool) -> Result<Self> {
        if root.exists() {
            if !root.is_dir() {
                bail!("{} exists and is not a directory", root.display());
            }
            let occupied = fs::read_dir(root)?.next().is_some();
            if occupied && !force {
                bail!("{} is not empty; pass --force to overwrite", root.display());
            }
        }
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.root.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

/// Samples as rows: `f1..fd,label`.
pub fn samples_csv(x: &DMatrix<f64>, labels: &DVector<f64>) -> String {
    let mut s = String::new();
    let header: Vec<String> = (1..=x.nrows()).map(|p| format!("f{p}")).collect();
    let _ = writeln!(s, "{},label", header.join(","));
    for i in 0..x.ncols() {
        let row: Vec<String> = x.column(i).iter().map(|&v| fmt_f64(v)).collect();
        let _ = writeln!(s, "{},{}", row.join(","), labels[i]);
    }
    s
}

pub fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|&v| fmt_f64(v)).collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

/// A header plus rows of pre-formatted cells.
pub fn table_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}
