//! Scan tables, CSV/JSON serialization and the timestamped sidecar.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Map, Value};

use crate::config::{RunConfig, SCHEMA_VERSION};
use crate::error::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const PROVENANCE_COLUMNS: [&str; 3] = ["config_hash", "schema_version", "tool_version"];

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    B(bool),
    S(String),
    Null,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::F(v) if v.is_nan() => "NaN".into(),
            Cell::F(v) if v.is_infinite() => if *v > 0.0 { "inf" } else { "-inf" }.into(),
            Cell::F(v) => format!("{v:.16e}"),
            Cell::B(b) => b.to_string(),
            Cell::S(s) => s.clone(),
            Cell::Null => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::F(v) if v.is_finite() => json!(v),
            Cell::F(_) | Cell::Null => Value::Null,
            Cell::B(b) => json!(b),
            Cell::S(s) => json!(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Null, Cell::F)
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }
}

/// Everything a command produces.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub kind: &'static str,
    pub table: Table,
    pub summary: Value,
    pub checks: Vec<Check>,
    pub failed_rows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

pub struct Provenance {
    pub hash: String,
    pub schema_version: u32,
    pub tool_version: &'static str,
}

impl Provenance {
    pub fn of(cfg: &RunConfig) -> Self {
        Provenance { hash: cfg.hash(), schema_version: SCHEMA_VERSION, tool_version: TOOL_VERSION }
    }
}

pub fn render_csv(o: &Outcome, p: &Provenance) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let mut header: Vec<&str> = o.table.columns.clone();
    header.extend(PROVENANCE_COLUMNS);
    w.write_record(&header)?;
    let sv = p.schema_version.to_string();
    for row in &o.table.rows {
        let mut rec: Vec<String> = row.iter().map(Cell::csv).collect();
        rec.extend([p.hash.clone(), sv.clone(), p.tool_version.to_string()]);
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))
}

pub fn render_json(o: &Outcome, p: &Provenance) -> Result<Vec<u8>, CliError> {
    let rows: Vec<Value> = o
        .table
        .rows
        .iter()
        .map(|r| {
            let mut m = Map::new();
            for (c, v) in o.table.columns.iter().zip(r) {
                m.insert(c.to_string(), v.json());
            }
            Value::Object(m)
        })
        .collect();
    let doc = json!({
        "kind": o.kind,
        "config_hash": p.hash,
        "schema_version": p.schema_version,
        "tool_version": p.tool_version,
        "columns": o.table.columns,
        "rows": rows,
        "summary": o.summary,
        "checks": o.checks,
    });
    let mut out = serde_json::to_vec_pretty(&doc)?;
    out.push(b'\n');
    Ok(out)
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Writes the data file and, for file outputs, the `<out>.meta.json` sidecar.
pub fn write(o: &Outcome, cfg: &RunConfig, format: Format, out: Option<&Path>) -> Result<(), CliError> {
    let prov = Provenance::of(cfg);
    let bytes = match format {
        Format::Csv => render_csv(o, &prov)?,
        Format::Json => render_json(o, &prov)?,
    };
    match out {
        None => std::io::stdout().lock().write_all(&bytes)?,
        Some(path) => {
            std::fs::write(path, &bytes)?;
            let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            let meta = json!({
                "kind": o.kind,
                "data_file": path.file_name().map(|f| f.to_string_lossy().into_owned()),
                "format": match format { Format::Csv => "csv", Format::Json => "json" },
                "created_unix": stamp,
                "config_hash": prov.hash,
                "schema_version": prov.schema_version,
                "tool_version": prov.tool_version,
                "config": cfg.canonical(),
                "summary": o.summary,
                "checks": o.checks,
            });
            let mut m = serde_json::to_vec_pretty(&meta)?;
            m.push(b'\n');
            std::fs::write(sidecar_path(path), m)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(Cell::F(0.1).csv(), "1.0000000000000001e-1");
        assert_eq!(Cell::F(-2.5).csv(), "-2.5000000000000000e0");
        let v: f64 = Cell::F(std::f64::consts::PI).csv().parse().unwrap();
        assert_eq!(v, std::f64::consts::PI);
        assert_eq!(Cell::Null.csv(), "");
        assert_eq!(Cell::F(f64::NAN).json(), Value::Null);
    }
}
