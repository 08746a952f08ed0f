//! Comma-separated measurement tables with a header row and `#` comments.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementTable {
    pub path: PathBuf,
    pub names: Vec<String>,
    /// Column-major values, one vector per name.
    pub columns: Vec<Vec<f64>>,
}

impl MeasurementTable {
    pub fn row_count(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn has(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::MissingColumn {
                column: name.to_string(),
                available: self.names.join(", "),
            })
    }

    /// Column that must be strictly increasing (time or delay axes).
    pub fn increasing_column(&self, name: &str) -> Result<&[f64]> {
        let col = self.column(name)?;
        if let Some(i) = col.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Domain(format!(
                "{}: column `{name}` must be strictly increasing (row {})",
                self.path.display(),
                i + 2
            )));
        }
        Ok(col)
    }
}

pub fn parse_table(text: &str, path: &Path) -> Result<MeasurementTable> {
    // Comments and blank lines are dropped before parsing; `physical` maps
    // the reader's line numbers back to the file's.
    let mut physical = Vec::new();
    let mut kept = String::with_capacity(text.len());
    for (i, l) in text.lines().enumerate() {
        let t = l.trim_start();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        physical.push(i as u64 + 1);
        kept.push_str(l);
        kept.push('\n');
    }
    let to_file_line = |line: u64| physical.get(line.saturating_sub(1) as usize).copied().unwrap_or(line);
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line: to_file_line(line),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(kept.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| parse_err(e.position().map_or(1, |p| p.line()), e.to_string()))?
        .clone();
    let names: Vec<String> = headers.iter().map(str::to_string).collect();
    if names.is_empty() || names.iter().any(String::is_empty) {
        return Err(parse_err(1, "header row has empty column names".into()));
    }
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(parse_err(1, format!("duplicate column `{n}`")));
        }
    }
    let mut columns = vec![Vec::new(); names.len()];
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            let message = match e.kind() {
                csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
                    format!("expected {expected_len} fields, found {len}")
                }
                _ => e.to_string(),
            };
            parse_err(line, message)
        })?;
        let line = record.position().map_or(0, |p| p.line());
        for (i, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("column `{}`: `{cell}` is not a number", names[i])))?;
            columns[i].push(v);
        }
    }
    if columns[0].is_empty() {
        return Err(parse_err(1, "table has no data rows".into()));
    }
    Ok(MeasurementTable {
        path: path.to_path_buf(),
        names,
        columns,
    })
}

pub fn load_table(path: &Path) -> Result<MeasurementTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_table(&text, path)
}
