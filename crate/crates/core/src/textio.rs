//! Plain-text serialization helpers shared by the exports and the CLI.
//!
//! Floating-point values are written with [`format_real`], which keeps 17
//! significant digits so that reading the text back reproduces the exact
//! bit pattern of the original `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Formats a real value round-trippably (17 significant digits).
pub fn format_real(value: f64) -> String {
    format!("{value:.16e}")
}

/// Writes a matrix as rows of space-separated round-trippable reals.
pub fn write_matrix(path: &Path, matrix: &DMatrix<f64>) -> Result<()> {
    let mut out = String::new();
    for i in 0..matrix.nrows() {
        for j in 0..matrix.ncols() {
            if j > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}", format_real(matrix[(i, j)]));
        }
        out.push('\n');
    }
    write_text(path, &out)
}

/// Reads a matrix written by [`write_matrix`]. All rows must have equal length.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = read_text(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.display().to_string(),
                    message: format!("line {}: bad real {tok:?}", lineno + 1),
                })
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    message: format!(
                        "line {}: expected {} columns, found {}",
                        lineno + 1,
                        first.len(),
                        row.len()
                    ),
                });
            }
        }
        rows.push(row);
    }
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_formatting_round_trips_bits() {
        for &v in &[
            0.0,
            1.0,
            -1.5,
            std::f64::consts::PI,
            1.0 / 3.0,
            6.02e23,
            -2.2250738585072014e-308,
        ] {
            let text = format_real(v);
            let back: f64 = text.parse().unwrap();
            assert_eq!(v.to_bits(), back.to_bits(), "{v} -> {text}");
        }
    }

    #[test]
    fn matrix_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.25, -3.5, 1e-9, 7.0, 2.0 / 3.0]);
        write_matrix(&path, &m).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn ragged_matrix_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        write_text(&path, "1 2 3\n4 5\n").unwrap();
        assert!(matches!(read_matrix(&path), Err(Error::Parse { .. })));
    }
}
