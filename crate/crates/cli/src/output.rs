use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde_json::{json, Value};

use crate::config::{echo, RunConfig, SCHEMA_VERSION};

/// One CSV cell. Floats keep all 17 significant digits.
#[derive(Clone, Debug)]
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::F)
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::F(v) => write!(f, "{v:.16e}"),
            Cell::I(v) => write!(f, "{v}"),
            Cell::S(s) => {
                if s.contains([',', '"', '\n']) {
                    write!(f, "\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
                } else {
                    f.write_str(s)
                }
            }
            Cell::Empty => Ok(()),
        }
    }
}

pub fn ensure_dir(dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)
}

/// CSV with `#` lines carrying the schema version and the config echo.
pub fn write_csv(path: &Path, config: &RunConfig, columns: &[String], rows: &[Vec<Cell>]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# schema_version: {SCHEMA_VERSION}")?;
    writeln!(w, "# config: {}", echo(config))?;
    writeln!(w, "{}", columns.join(","))?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()
}

/// JSON document with `schema_version` and `config` merged into `body`.
pub fn write_json(path: &Path, config: &RunConfig, body: Value) -> io::Result<()> {
    let mut doc = json!({ "schema_version": SCHEMA_VERSION, "config": echo(config) });
    if let (Value::Object(d), Value::Object(b)) = (&mut doc, body) {
        d.extend(b);
    }
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &doc)?;
    writeln!(w)?;
    w.flush()
}

pub fn columns(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}
