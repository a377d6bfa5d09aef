//! CSV artifacts with a one-line JSON metadata header.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(&'static str),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Self::Num(v)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Self::Int(v.into())
    }
}

impl From<&'static str> for Cell {
    fn from(v: &'static str) -> Self {
        Self::Text(v)
    }
}

/// Shortest round-trip decimal; exponent form outside `[1e-4, 1e15)`.
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !a.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: &'static [&'static str],
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &'static [&'static str]) -> Self {
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

pub fn units() -> Value {
    json!({
        "energy": "E/N in units of h; real and imaginary parts are both divided by N",
        "rate": "units of h",
        "time": "units of 1/h",
        "spin": "J_i = <J_i>/N on the sphere |J| = 1/2",
        "density": "states per unit E/N",
        "angle": "radians",
    })
}

/// The header object: version, units, the resolved config and a summary.
pub fn metadata(subcommand: &str, cfg: &RunConfig, columns: &[&str], summary: &Value) -> Value {
    json!({
        "tool": "lmg",
        "version": VERSION,
        "subcommand": subcommand,
        "columns": columns,
        "units": units(),
        "config": serde_json::to_value(cfg).expect("config serializes"),
        "summary": summary,
    })
}

pub fn render(meta: &Value, table: &Table) -> String {
    let mut out = format!("# {meta}\n").into_bytes();
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(table.columns).expect("in-memory write");
    for row in &table.rows {
        w.write_record(row.iter().map(|cell| match cell {
            Cell::Num(v) => format_number(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.to_string(),
        }))
        .expect("in-memory write");
    }
    w.flush().expect("in-memory write");
    drop(w);
    String::from_utf8(out).expect("utf-8 cells")
}

/// Reads the metadata header back from a CSV artifact.
pub fn read_metadata(text: &str) -> Option<Value> {
    let line = text.lines().next()?.strip_prefix("# ")?;
    serde_json::from_str(line).ok()
}

/// Config embedded in an artifact's header.
pub fn embedded_config(text: &str) -> Option<RunConfig> {
    serde_json::from_value(read_metadata(text)?.get("config")?.clone()).ok()
}

pub fn write_artifact(dir: &Path, file: &str, contents: &str) -> Result<PathBuf, CliError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| CliError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let path = dir.join(file);
    let mut f = fs::File::create(&path).map_err(io(&path))?;
    f.write_all(contents.as_bytes()).map_err(io(&path))?;
    Ok(path)
}
