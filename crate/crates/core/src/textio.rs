//! Plain-text matrix input.
//!
//! Dense: one row per line, whitespace-separated. Sparse: a header line
//! `n nnz` followed by `nnz` lines `i j value` (0-based). Blank lines and
//! lines starting with `#` are ignored in both.

use std::path::Path;

use crate::error::{Error, Result};
use crate::operator::Operator;

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn num<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T> {
    tok.parse().map_err(|_| parse_err(line, format!("cannot parse {tok:?}")))
}

pub fn parse_dense(text: &str) -> Result<Operator> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, l) in content_lines(text) {
        let row = l.split_whitespace().map(|t| num(t, line)).collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_err(line, format!("expected {} columns, found {}", first.len(), row.len())));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(0, "empty matrix"));
    }
    let (r, c) = (rows.len(), rows[0].len());
    Ok(Operator::Dense(nalgebra::DMatrix::from_fn(r, c, |i, j| rows[i][j])))
}

/// Square `n x n` matrix from coordinate triplets; duplicates are summed.
pub fn parse_sparse(text: &str) -> Result<Operator> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| parse_err(0, "missing `n nnz` header"))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 2 {
        return Err(parse_err(hline, "header must be `n nnz`"));
    }
    let n: usize = num(h[0], hline)?;
    let nnz: usize = num(h[1], hline)?;
    let mut triplets = Vec::with_capacity(nnz);
    for (line, l) in lines {
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.len() != 3 {
            return Err(parse_err(line, "expected `i j value`"));
        }
        let (i, j): (usize, usize) = (num(t[0], line)?, num(t[1], line)?);
        if i >= n || j >= n {
            return Err(parse_err(line, format!("index ({i}, {j}) outside {n} x {n}")));
        }
        triplets.push((i, j, num(t[2], line)?));
    }
    if triplets.len() != nnz {
        return Err(parse_err(hline, format!("header declares {nnz} entries, found {}", triplets.len())));
    }
    Operator::from_triplets(n, n, &triplets)
}

/// Picks the sparse reader when the first content line has two fields and
/// the dense reader otherwise.
pub fn parse_matrix(text: &str) -> Result<Operator> {
    match content_lines(text).next() {
        Some((_, l)) if l.split_whitespace().count() == 2 && !l.contains('.') && !l.contains('e') => {
            // a 2x2 dense matrix of integers is ambiguous; a sparse header
            // must be followed by three-field lines
            let second = content_lines(text).nth(1).map(|(_, l)| l.split_whitespace().count());
            if second == Some(3) || second.is_none() {
                parse_sparse(text)
            } else {
                parse_dense(text)
            }
        }
        _ => parse_dense(text),
    }
}

pub fn read_matrix(path: &Path) -> Result<Operator> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidParameter(format!("cannot read {}: {e}", path.display())))?;
    parse_matrix(&text)
}
