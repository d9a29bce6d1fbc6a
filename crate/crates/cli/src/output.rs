//! Result tables, the CSV/JSON sink and the run manifest.
//!
//! Every row starts with the master seed and the stream index it was drawn
//! from. Rows aggregated over all streams carry stream `-1`; deterministic
//! rows carry stream `0`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{Effective, Format};
use crate::error::Result;

pub const AGGREGATE_STREAM: i64 = -1;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_owned())
    }
}

impl Cell {
    /// 17 significant digits for floats.
    fn csv(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => format!("{x:.16e}"),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(i) => json!(i),
            Cell::Float(x) => json!(x),
            Cell::Text(s) => json!(s),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Table {
    seed: u64,
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(seed: u64, columns: &[S]) -> Self {
        let mut all = vec!["seed".to_owned(), "stream".to_owned()];
        all.extend(columns.iter().map(|c| c.as_ref().to_owned()));
        Self { seed, columns: all, rows: Vec::new() }
    }

    pub fn push(&mut self, stream: i64, cells: Vec<Cell>) {
        assert_eq!(cells.len() + 2, self.columns.len(), "row width does not match the header");
        let mut row = vec![Cell::Int(self.seed as i64), Cell::Int(stream)];
        row.extend(cells);
        self.rows.push(row);
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.columns)?;
        for row in &self.rows {
            out.write_record(row.iter().map(Cell::csv))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self.rows.iter().map(|r| Value::Array(r.iter().map(Cell::json).collect())).collect();
        json!({ "columns": self.columns, "rows": rows })
    }
}

/// Output of one experiment.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub table: Table,
    pub summary: Value,
    /// `Some(msg)` when the experiment's own check failed.
    pub failure: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub wall_time_seconds: f64,
    pub results: PathBuf,
    pub rows: usize,
    pub summary: Value,
}

pub fn version_string() -> String {
    match option_env!("USTWIND_GIT_DESCRIBE") {
        Some(d) => d.to_owned(),
        None => format!("v{}", env!("CARGO_PKG_VERSION")),
    }
}

/// SHA-256 of the canonical JSON form of the resolved config.
pub fn config_hash(cfg: &Effective) -> Result<String> {
    let text = serde_json::to_string(cfg)?;
    let digest = Sha256::digest(text.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub fn manifest_path(results: &Path) -> PathBuf {
    let mut name = results.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    results.with_file_name(name)
}

/// Writes the results file and returns its manifest (also written).
pub fn write_artifacts(cfg: &Effective, outcome: &Outcome, wall_time: f64) -> Result<Manifest> {
    if let Some(dir) = cfg.path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let file = fs::File::create(&cfg.path)?;
    match cfg.format {
        Format::Csv => outcome.table.write_csv(std::io::BufWriter::new(file))?,
        Format::Json => {
            let doc = json!({
                "experiment": cfg.experiment.name(),
                "table": outcome.table.to_json(),
                "summary": outcome.summary,
            });
            let mut w = std::io::BufWriter::new(file);
            serde_json::to_writer_pretty(&mut w, &doc)?;
            w.write_all(b"\n")?;
        }
    }
    let manifest = Manifest {
        experiment: cfg.experiment.name().to_owned(),
        config_hash: config_hash(cfg)?,
        seed: cfg.seed,
        version: version_string(),
        wall_time_seconds: wall_time,
        results: cfg.path.clone(),
        rows: outcome.table.len(),
        summary: outcome.summary.clone(),
    };
    fs::write(manifest_path(&cfg.path), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}
