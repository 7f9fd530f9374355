//! CSV tables. Every file is comma-separated with a header row, `.` decimal
//! points and LF line endings, and every row starts with the config hash.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, Result};

pub const SWEEP_HEADER: [&str; 12] = [
    "config_hash",
    "family",
    "s",
    "k",
    "method",
    "statistic",
    "mu_hat",
    "mc_se",
    "eta_hat",
    "iterations",
    "status",
    "wall_time",
];

/// One row per (grid point, statistic). Used for `fit.csv` and `sweep.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub config_hash: String,
    pub family: String,
    pub s: Option<usize>,
    pub k: Option<usize>,
    pub method: String,
    pub statistic: String,
    /// Model mean `μ(η̂)`.
    pub mu_hat: Option<f64>,
    /// Standard error of `mu_hat`, pooling the estimate of `μ(η̂)` with the
    /// Monte-Carlo spread of `η̂`.
    pub mc_se: Option<f64>,
    pub eta_hat: Option<f64>,
    pub iterations: Option<usize>,
    /// Fit status, or `error: ...` when the grid point failed.
    pub status: String,
    pub wall_time: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantileRow {
    pub config_hash: String,
    pub statistic: String,
    pub quantile: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyRow {
    pub config_hash: String,
    pub group: String,
    pub check: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KlRow {
    pub config_hash: String,
    pub kernel: String,
    pub k: usize,
    pub kl: f64,
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Writes `rows` to `dir/name` and returns the path.
pub fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join(name);
    let file = File::create(&path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Type-1 empirical quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let n = sorted.len();
    let idx = ((p * n as f64).ceil() as usize).clamp(1, n) - 1;
    sorted[idx]
}
