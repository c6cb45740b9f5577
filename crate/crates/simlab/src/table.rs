//! Result tables and their serialization: CSV bodies with a header row plus
//! a JSON metadata sidecar. Cell values print through Rust's shortest
//! round-trip float formatting, so a table's byte content is a pure function
//! of the numbers in it; timings live only in the sidecar.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// One value of a result table.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Real(f64),
    Text(String),
    /// An empty cell (a dash in the reference tables).
    Null,
}

impl Cell {
    fn write_csv(&self, out: &mut String) {
        match self {
            Cell::Int(v) => {
                let _ = write!(out, "{v}");
            }
            Cell::Real(v) => {
                let _ = write!(out, "{v}");
            }
            Cell::Text(s) => {
                if s.contains([',', '"', '\n']) {
                    let _ = write!(out, "\"{}\"", s.replace('"', "\"\""));
                } else {
                    out.push_str(s);
                }
            }
            Cell::Null => {}
        }
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        match v {
            Some(x) => Cell::Real(x),
            None => Cell::Null,
        }
    }
}

/// A named table with a fixed schema; every row carries the experiment cell
/// it belongs to in its leading columns.
#[derive(Debug, Clone)]
pub struct ResultTable {
    /// File stem of the emitted CSV.
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl ResultTable {
    pub fn new(name: &str, columns: Vec<&'static str>) -> Self {
        Self {
            name: name.to_string(),
            columns,
            rows: Vec::new(),
        }
    }

    /// Appends a row; the arity must match the schema.
    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row arity does not match schema of table {}",
            self.name
        );
        self.rows.push(row);
    }

    /// The full CSV body: header row plus one line per row, `\n` endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            for (k, cell) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                cell.write_csv(&mut out);
            }
            out.push('\n');
        }
        out
    }
}

/// Run metadata written next to the tables. The config echo keeps the run
/// reproducible from its outputs alone; elapsed time stays out of the CSVs
/// so those remain byte-identical across reruns.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RunMeta {
    pub experiment: String,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub n_reps: usize,
    /// Number of resampled replications (failed attempts that were redrawn).
    pub resampled: u64,
    pub resample_rate: f64,
    pub elapsed_seconds: f64,
    pub tables: Vec<String>,
}

/// Version string stamped into every sidecar.
pub fn version_string() -> String {
    format!("simlab/{}", env!("CARGO_PKG_VERSION"))
}

/// Writes each table as `<name>.csv` under `dir` plus a
/// `<experiment>.meta.json` sidecar; returns the paths written.
pub fn write_outputs(dir: &Path, tables: &[ResultTable], meta: &RunMeta) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for t in tables {
        let path = dir.join(format!("{}.csv", t.name));
        fs::write(&path, t.to_csv())?;
        written.push(path);
    }
    let meta_path = dir.join(format!("{}.meta.json", meta.experiment));
    let body = serde_json::to_string_pretty(meta).expect("metadata serializes");
    fs::write(&meta_path, body + "\n")?;
    written.push(meta_path);
    Ok(written)
}
