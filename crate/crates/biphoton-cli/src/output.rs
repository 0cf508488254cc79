//! Deterministic table and metadata output.
//!
//! CSV: fixed column order, 17-significant-digit floats, UNIX newlines,
//! NaN and absent values as empty cells. Files are written to a temp path in
//! the target directory and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// A cell: absent, float or integer.
#[derive(Clone, Debug)]
pub enum Cell {
    Empty,
    Float(f64),
    Int(u64),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Cell {
        Cell::Float(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Cell {
        match v {
            Some(x) => Cell::Float(x),
            None => Cell::Empty,
        }
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Cell {
        Cell::Int(v)
    }
}

fn format_float(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.16e}")
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Empty => String::new(),
            Cell::Float(v) => format_float(*v),
            Cell::Int(v) => v.to_string(),
        }
    }
}

/// Write a rectangular table; a header-only file for an empty row set.
pub fn write_table(
    columns: &[&str],
    rows: &[Vec<Cell>],
    path: &Path,
) -> std::io::Result<()> {
    for row in rows {
        assert_eq!(row.len(), columns.len(), "ragged table row");
    }
    let mut text = String::new();
    text.push_str(&columns.join(","));
    text.push('\n');
    for row in rows {
        let rendered: Vec<String> = row.iter().map(Cell::render).collect();
        text.push_str(&rendered.join(","));
        text.push('\n');
    }
    atomic_write(path, text.as_bytes())
}

/// Write bytes via a temporary sibling and rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp: PathBuf = path.with_extension(format!(
        "{}.tmp-{}",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable metadata");
    text.push('\n');
    atomic_write(path, text.as_bytes())
}
