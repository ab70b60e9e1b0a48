//! Tabular run output: a CSV of rows plus a JSON metadata document.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use kst_core::{Error, Result};
use serde_json::{json, Map, Value};

use crate::config::ExperimentConfig;

/// Bumped whenever a column is renamed, removed or reordered.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    /// Undefined quantity (written as an empty field).
    Empty,
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Cell::Int(v) => Some(v as f64),
            Cell::Float(v) => Some(v),
            _ => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Empty => String::new(),
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format!("{v:?}"),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Float)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Experiment-specific metadata (fits, planner values, telemetry).
    pub extra: Map<String, Value>,
}

impl RunRecord {
    pub fn new(config: ExperimentConfig, columns: Vec<String>) -> Self {
        Self { config, columns, rows: Vec::new(), extra: Map::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn cell(&self, row: usize, column: &str) -> Option<&Cell> {
        self.column(column).and_then(|j| self.rows.get(row).map(|r| &r[j]))
    }

    /// Numeric value of a cell; `None` for empty or non-numeric cells.
    pub fn value(&self, row: usize, column: &str) -> Option<f64> {
        self.cell(row, column).and_then(Cell::as_f64)
    }

    pub fn column_values(&self, column: &str) -> Vec<Option<f64>> {
        (0..self.rows.len()).map(|i| self.value(i, column)).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.columns).map_err(csv_error)?;
        for row in &self.rows {
            out.write_record(row.iter().map(Cell::render)).map_err(csv_error)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn meta(&self) -> Value {
        let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        json!({
            "name": self.config.output_name(),
            "experiment": self.config.experiment.name(),
            "schema_version": SCHEMA_VERSION,
            "columns": self.columns,
            "config": self.config,
            "environment": {
                "version": env!("CARGO_PKG_VERSION"),
                "created_unix": created,
                "os": std::env::consts::OS,
                "arch": std::env::consts::ARCH,
                "threads": rayon::current_num_threads(),
            },
            "seed": self.config.seed,
            "extra": self.extra,
        })
    }

    /// Writes `<name>.csv` and `<name>.meta.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let name = self.config.output_name();
        let csv_path = dir.join(format!("{name}.csv"));
        let meta_path = dir.join(format!("{name}.meta.json"));
        self.write_csv(fs::File::create(&csv_path)?)?;
        let meta = serde_json::to_string_pretty(&self.meta()).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(&meta_path, meta + "\n")?;
        Ok((csv_path, meta_path))
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}
