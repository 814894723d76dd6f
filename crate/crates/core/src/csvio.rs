//! Minimal CSV helpers for the numeric file formats: one signal per row,
//! comma-separated f64 values, no header. Floats are written with Rust's
//! shortest round-trip formatting, so rereading a file reproduces the
//! values bit-for-bit.

use std::io::Write;
use std::path::Path;

use crate::error::{DigError, Result};

pub fn write_signals_to(out: &mut impl Write, signals: &[Vec<f64>]) -> Result<()> {
    for row in signals {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Write rows atomically: to a sibling temp file first, then rename.
pub fn write_signals_csv(path: &Path, signals: &[Vec<f64>]) -> Result<()> {
    let mut buf = Vec::new();
    write_signals_to(&mut buf, signals)?;
    write_atomic(path, &buf)
}

pub fn read_signals_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>> = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|e| DigError::CsvParse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    message: format!("{tok:?}: {e}"),
                })
            })
            .collect();
        rows.push(row?);
    }
    if rows.is_empty() {
        return Err(DigError::InvalidArgument(format!(
            "{} holds no rows",
            path.display()
        )));
    }
    Ok(rows)
}

/// Write bytes to `path` via a temp file + rename, so readers never see a
/// half-written artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
