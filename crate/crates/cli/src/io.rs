//! File plumbing: CSV ingest/egress, JSON output, and the model file.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub fn io_err(context: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{context}: {e}"))
}

/// Reads a CSV of observations: header line, then one row per observation,
/// every cell a finite number. Errors carry 1-based data row numbers.
pub fn read_csv_matrix(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| io_err(&format!("ingest {}", path.display()), e))?;
    let width = reader
        .headers()
        .map_err(|e| io_err("ingest: header", e))?
        .len();
    if width == 0 {
        return Err(CliError::Io(format!("ingest {}: empty header", path.display())));
    }
    let mut rows: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for (index, record) in reader.records().enumerate() {
        let row_no = index + 1;
        let record = record.map_err(|e| io_err(&format!("ingest: row {row_no}"), e))?;
        if record.len() != width {
            return Err(CliError::Io(format!(
                "ingest: row {row_no} has {} fields, expected {width}",
                record.len()
            )));
        }
        for (col, cell) in record.iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| {
                CliError::Io(format!(
                    "ingest: row {row_no}, column {}: not a number: {cell:?}",
                    col + 1
                ))
            })?;
            if !value.is_finite() {
                return Err(CliError::Io(format!(
                    "ingest: row {row_no}, column {}: non-finite value {value}",
                    col + 1
                )));
            }
            rows.push(value);
        }
        n += 1;
    }
    if n == 0 {
        return Err(CliError::Io(format!("ingest {}: no data rows", path.display())));
    }
    Ok(DMatrix::from_row_slice(n, width, &rows))
}

/// Writes observations as CSV with an `x1..xq` header. Floats are printed
/// in the shortest round-trip form.
pub fn write_csv_matrix(path: &Path, data: &DMatrix<f64>) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| io_err(&format!("write {}", path.display()), e))?;
    let header: Vec<String> = (1..=data.ncols()).map(|j| format!("x{j}")).collect();
    writer.write_record(&header).map_err(|e| io_err("write: header", e))?;
    for i in 0..data.nrows() {
        let row: Vec<String> = data.row(i).iter().map(|v| v.to_string()).collect();
        writer.write_record(&row).map_err(|e| io_err("write: row", e))?;
    }
    writer.flush().map_err(|e| io_err("write: flush", e))
}

/// Serializes a value as pretty JSON to the given file, or stdout when the
/// path is absent.
pub fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<(), CliError> {
    let mut body = serde_json::to_string_pretty(value).map_err(|e| io_err("serialize", e))?;
    body.push('\n');
    emit_text(out, &body)
}

pub fn emit_text(out: Option<&Path>, body: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, body)
            .map_err(|e| io_err(&format!("write {}", path.display()), e)),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(body.as_bytes()).map_err(|e| io_err("write stdout", e))
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let body = fs::read_to_string(path)
        .map_err(|e| io_err(&format!("read {}", path.display()), e))?;
    serde_json::from_str(&body).map_err(|e| io_err(&format!("parse {}", path.display()), e))
}

/// Model file consumed by `influence`.
#[derive(Deserialize)]
pub struct ModelFile {
    pub v: Vec<Vec<f64>>,
    pub blocks: Vec<usize>,
    pub breakdown: f64,
}

/// Row-major nested array for JSON output.
pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Rebuilds a square matrix from nested rows, validating rectangularity.
pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, CliError> {
    let n = rows.len();
    if n == 0 {
        return Err(CliError::Io("model: empty matrix".into()));
    }
    let mut flat = Vec::with_capacity(n * n);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(CliError::Io(format!(
                "model: row {} has {} entries, expected {n} (square matrix)",
                i + 1,
                row.len()
            )));
        }
        flat.extend_from_slice(row);
    }
    Ok(DMatrix::from_row_slice(n, n, &flat))
}

/// Reads the one-line comma-separated vector used for contamination points.
pub fn read_point_file(path: &Path) -> Result<Vec<f64>, CliError> {
    let body = fs::read_to_string(path)
        .map_err(|e| io_err(&format!("read {}", path.display()), e))?;
    let line = body
        .lines()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| CliError::Io(format!("{}: empty point file", path.display())))?;
    line.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Io(format!("{}: not a number: {tok:?}", path.display())))
        })
        .collect()
}
