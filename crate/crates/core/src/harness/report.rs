//! Versioned JSON reports: metadata echo, per-seed rows, aggregates.
//!
//! Reports are deterministic: rows are emitted in seed order, aggregates are
//! reduced in fixed order, and the wall-time field is the only thing that
//! varies between identical runs (`canonical_json` zeroes it).

use crate::scales::{ExponentSet, RadiusSet, ScaleSet};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("report JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema version {got} unsupported (expected {want})")]
    BadSchema { got: u32, want: u32 },
    #[error("aggregates do not match rows: {0}")]
    AggregateMismatch(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Meta {
    pub schema_version: u32,
    pub experiment: String,
    pub code_version: String,
    /// Wall time of the run; excluded from determinism comparisons.
    pub wall_time_ms: u64,
    pub config: BTreeMap<String, String>,
    /// Scale sets for every configured time point.
    pub scales: Vec<ScaleSet>,
    pub radius: RadiusSet,
    pub exponents: ExponentSet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report<R, A> {
    pub meta: Meta,
    pub rows: Vec<R>,
    pub aggregates: A,
}

impl<R: Serialize + DeserializeOwned, A: Serialize + DeserializeOwned> Report<R, A> {
    pub fn to_json(&self) -> Result<String, ReportError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// JSON with the wall-time field zeroed; byte-identical across re-runs
    /// of the same config.
    pub fn canonical_json(&self) -> Result<String, ReportError> {
        let mut v = serde_json::to_value(self)?;
        if let Some(m) = v.get_mut("meta").and_then(|m| m.get_mut("wall_time_ms")) {
            *m = serde_json::Value::from(0u64);
        }
        Ok(serde_json::to_string_pretty(&v)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ReportError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_json()?.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let text = std::fs::read_to_string(path)?;
        let report: Self = serde_json::from_str(&text)?;
        if report.meta.schema_version != SCHEMA_VERSION {
            return Err(ReportError::BadSchema {
                got: report.meta.schema_version,
                want: SCHEMA_VERSION,
            });
        }
        Ok(report)
    }
}

/// Write rows as CSV via a per-experiment row formatter.
pub fn write_csv<R>(
    path: &Path,
    header: &str,
    rows: &[R],
    fmt: impl Fn(&R) -> String,
) -> Result<(), ReportError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{header}")?;
    for r in rows {
        writeln!(f, "{}", fmt(r))?;
    }
    Ok(())
}

/// Two-column plot-ready CSV (e.g. empirical CDF vs model CDF).
pub fn write_xy_csv(
    path: &Path,
    header: &str,
    points: &[(f64, f64)],
) -> Result<(), ReportError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{header}")?;
    for (x, y) in points {
        writeln!(f, "{x},{y}")?;
    }
    Ok(())
}
