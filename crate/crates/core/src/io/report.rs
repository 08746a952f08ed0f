//! JSON run reports and their plot-ready tables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{Experiment, RunConfig};
use crate::error::{Error, Result};

/// A named column table; `None` cells are written empty.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlotTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl PlotTable {
    pub fn new(columns: &[&str]) -> Self {
        PlotTable {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Builds a table from equal-length columns.
    pub fn from_columns(columns: Vec<(String, Vec<f64>)>) -> Self {
        let n = columns.first().map_or(0, |c| c.1.len());
        debug_assert!(columns.iter().all(|c| c.1.len() == n));
        let rows = (0..n)
            .map(|i| columns.iter().map(|c| Some(c.1[i]).filter(|v| v.is_finite())).collect())
            .collect();
        PlotTable {
            columns: columns.into_iter().map(|c| c.0).collect(),
            rows,
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row.into_iter().map(|v| Some(v).filter(|v| v.is_finite())).collect());
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: PathBuf,
    pub sha256: String,
    pub rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub experiment: Experiment,
    pub seed: u64,
    /// Effective configuration, after command-line overrides.
    pub config: RunConfig,
    pub config_sha256: String,
    pub inputs: Vec<InputRecord>,
    /// `None` for experiments that do not fit anything.
    pub converged: Option<bool>,
    #[serde(default)]
    pub warnings: Vec<String>,
    pub outputs: serde_json::Value,
    pub plots: BTreeMap<String, PlotTable>,
}

impl Report {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn plot_kinds(&self) -> Vec<&str> {
        self.plots.keys().map(String::as_str).collect()
    }
}

/// Writes the `kind` table of `report` to `<dir>/<kind>.csv`.
pub fn emit_plot_data(report: &Report, kind: &str, dir: &Path) -> Result<PathBuf> {
    let table = report.plots.get(kind).ok_or_else(|| Error::UnknownPlotKind {
        kind: kind.to_string(),
        available: report.plot_kinds().join(", "),
    })?;
    let path = dir.join(format!("{kind}.csv"));
    let io_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(&path, io),
        other => Error::Config(format!("{other:?}")),
    };
    let mut w = csv::Writer::from_path(&path).map_err(io_err)?;
    w.write_record(&table.columns).map_err(io_err)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| v.map_or_else(String::new, |x| format!("{x:e}"))))
            .map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
