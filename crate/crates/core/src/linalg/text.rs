//! `.mat` text format.
//!
//! ```text
//! rows cols
//! a11 a12 ... a1c
//! ...
//! ```
//!
//! Entries are written with 17 significant digits, which round-trips every
//! `f64` exactly.

use std::fmt::Write as _;
use std::path::Path;

use super::Matrix;
use crate::error::{Error, Result};

pub fn to_text(m: &Matrix) -> String {
    let mut out = String::with_capacity(m.rows() * m.cols() * 24 + 16);
    let _ = writeln!(out, "{} {}", m.rows(), m.cols());
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            if j > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{:.16e}", m[(i, j)]);
        }
        out.push('\n');
    }
    out
}

pub fn from_text(text: &str) -> Result<Matrix> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Domain("missing `rows cols` header".into()))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    let [rows, cols] = dims.as_slice() else {
        return Err(Error::Domain(format!("bad header `{header}`")));
    };
    let parse_dim = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Domain(format!("bad dimension `{s}`")))
    };
    let (rows, cols) = (parse_dim(rows)?, parse_dim(cols)?);
    let mut entries = Vec::with_capacity(rows * cols);
    for (i, line) in lines.enumerate() {
        let before = entries.len();
        for tok in line.split_whitespace() {
            let x = tok
                .parse::<f64>()
                .map_err(|_| Error::Domain(format!("bad number `{tok}` on data line {}", i + 1)))?;
            entries.push(x);
        }
        if entries.len() - before != cols {
            return Err(Error::Domain(format!(
                "data line {} has {} entries, expected {cols}",
                i + 1,
                entries.len() - before
            )));
        }
    }
    Matrix::from_row_slice(rows, cols, &entries)
}

pub fn write_mat(path: &Path, m: &Matrix) -> Result<()> {
    std::fs::write(path, to_text(m)).map_err(|e| Error::file(path, e))
}

pub fn read_mat(path: &Path) -> Result<Matrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    from_text(&text).map_err(|e| Error::file(path, e))
}
