//! Deterministic file output: CSV with fixed float formatting and serde JSON
//! with stable field order. Identical data produces byte-identical files.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Fixed-width scientific notation with 17 significant digits: lossless for
/// f64 and byte-stable across runs.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a CSV file: header row, then one row per record, floats formatted
/// by [`format_float`], newline-terminated.
pub fn write_csv(path: &Path, headers: &[String], rows: &[Vec<f64>]) -> Result<()> {
    for row in rows {
        if row.len() != headers.len() {
            return Err(Error::Config(format!(
                "CSV row has {} fields, header has {}",
                row.len(),
                headers.len()
            )));
        }
    }
    let mut out = String::new();
    out.push_str(&headers.join(","));
    out.push('\n');
    for row in rows {
        let fields: Vec<String> = row.iter().map(|x| format_float(*x)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Writes pretty-printed JSON, newline-terminated.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Io(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| Error::Io(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    let mut file = std::fs::File::create(path)
        .map_err(|e| Error::Io(format!("cannot create {}: {e}", path.display())))?;
    file.write_all(bytes)
        .map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}
