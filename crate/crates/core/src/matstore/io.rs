//! File ingestion.
//!
//! Triplet CSV: first line `n,m`, then one `i,j,value` line per nonzero
//! (0-based indices, `.` decimal separator). Blank lines are ignored.
//!
//! Matrix Market: `coordinate real general` (or `integer`), 1-based indices
//! converted to 0-based on load.

use std::fmt::Write as _;
use std::path::Path;

use super::SampledMatrix;
use crate::error::{Error, Result};

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn field<T: std::str::FromStr>(tok: Option<&str>, line: usize, name: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {name}")))?;
    tok.trim()
        .parse()
        .map_err(|_| parse_err(line, format!("invalid {name} {:?}", tok.trim())))
}

pub fn parse_csv(text: &str) -> Result<SampledMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "empty file, expected `n,m`"))?;
    let mut toks = header.split(',');
    let n: usize = field(toks.next(), hline, "row count")?;
    let m: usize = field(toks.next(), hline, "column count")?;
    if toks.next().is_some() {
        return Err(parse_err(hline, "header must be `n,m`"));
    }
    let mut triplets = Vec::new();
    for (line, l) in lines {
        let mut toks = l.split(',');
        let i: usize = field(toks.next(), line, "row index")?;
        let j: usize = field(toks.next(), line, "column index")?;
        let v: f64 = field(toks.next(), line, "value")?;
        if toks.next().is_some() {
            return Err(parse_err(line, "expected `i,j,value`"));
        }
        if i >= n || j >= m {
            return Err(Error::DimensionMismatch(format!(
                "line {line}: entry ({i}, {j}) outside declared {n}x{m}"
            )));
        }
        triplets.push((i, j, v));
    }
    SampledMatrix::build(&triplets, n, m)
}

pub fn parse_matrix_market(text: &str) -> Result<SampledMatrix> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l.trim()));
    let (_, banner) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let banner_lc = banner.to_ascii_lowercase();
    let words: Vec<&str> = banner_lc.split_whitespace().collect();
    if words.len() < 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(parse_err(1, "missing %%MatrixMarket matrix banner"));
    }
    if words[2] != "coordinate" || !matches!(words[3], "real" | "integer") || words[4] != "general" {
        return Err(parse_err(1, "only `coordinate real general` is supported"));
    }
    let mut body = lines.filter(|(_, l)| !l.is_empty() && !l.starts_with('%'));
    let (sline, size) = body.next().ok_or_else(|| parse_err(1, "missing size line"))?;
    let mut toks = size.split_whitespace();
    let n: usize = field(toks.next(), sline, "row count")?;
    let m: usize = field(toks.next(), sline, "column count")?;
    let nnz: usize = field(toks.next(), sline, "entry count")?;
    let mut triplets = Vec::with_capacity(nnz);
    for (line, l) in body {
        let mut toks = l.split_whitespace();
        let i: usize = field(toks.next(), line, "row index")?;
        let j: usize = field(toks.next(), line, "column index")?;
        let v: f64 = field(toks.next(), line, "value")?;
        if i == 0 || j == 0 || i > n || j > m {
            return Err(Error::DimensionMismatch(format!(
                "line {line}: 1-based entry ({i}, {j}) outside declared {n}x{m}"
            )));
        }
        triplets.push((i - 1, j - 1, v));
    }
    if triplets.len() != nnz {
        return Err(Error::DimensionMismatch(format!(
            "size line declares {nnz} entries, found {}",
            triplets.len()
        )));
    }
    SampledMatrix::build(&triplets, n, m)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<SampledMatrix> {
    parse_csv(&std::fs::read_to_string(path)?)
}

pub fn load_matrix_market(path: impl AsRef<Path>) -> Result<SampledMatrix> {
    parse_matrix_market(&std::fs::read_to_string(path)?)
}

/// Writes the nonzeros of `h` in the triplet CSV format. Floats use the
/// shortest representation that round-trips.
pub fn write_csv(h: &SampledMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{},{}", h.n_rows(), h.n_cols());
    for (i, j, v) in h.to_triplets() {
        let _ = writeln!(out, "{i},{j},{v:?}");
    }
    std::fs::write(path, out)?;
    Ok(())
}
