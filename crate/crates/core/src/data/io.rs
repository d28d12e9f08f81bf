//! Delimited-text matrix files.
//!
//! One matrix row per line, comma or tab separated (detected from the first
//! data line), `NA` (any case) or an empty field for a missing value, and
//! optional `#` comment lines.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{DatasetMeta, ObservedMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOptions {
    /// Rows and columns with fewer observed entries than this are dropped,
    /// repeatedly, until every remaining row and column qualifies.
    pub min_observed: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { min_observed: 3 }
    }
}

pub fn load_matrix(path: impl AsRef<Path>, opts: LoadOptions) -> Result<(ObservedMatrix, DatasetMeta)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_matrix(&text, &name, opts)
}

fn is_missing(field: &str) -> bool {
    field.is_empty() || field.eq_ignore_ascii_case("na")
}

pub fn parse_matrix(text: &str, name: &str, opts: LoadOptions) -> Result<(ObservedMatrix, DatasetMeta)> {
    let mut delimiter: Option<char> = None;
    let mut cols: Option<usize> = None;
    let mut values = Vec::new();
    let mut mask = Vec::new();
    let mut rows = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim_start().starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let delim = *delimiter.get_or_insert(if line.contains('\t') { '\t' } else { ',' });
        let fields: Vec<&str> = line.split(delim).map(str::trim).collect();
        match cols {
            None => cols = Some(fields.len()),
            Some(c) if c != fields.len() => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("expected {c} fields, found {}", fields.len()),
                })
            }
            _ => {}
        }
        for field in fields {
            if is_missing(field) {
                values.push(f64::NAN);
                mask.push(false);
            } else {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    line: lineno + 1,
                    message: format!("cannot parse {field:?} as a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        message: format!("non-finite value {field:?}"),
                    });
                }
                values.push(v);
                mask.push(true);
            }
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::EmptyMatrix("file contains no data rows".into()))?;
    let (values, mask, row_ids, col_ids) = filter_sparse(rows, cols, values, mask, opts.min_observed);
    if row_ids.is_empty() || col_ids.is_empty() {
        return Err(Error::EmptyMatrix(format!(
            "no rows/columns left with >= {} observed entries",
            opts.min_observed
        )));
    }
    let m = ObservedMatrix::with_ids(row_ids.len(), col_ids.len(), values, mask, row_ids, col_ids)?;
    let meta = m.meta(name);
    Ok((m, meta))
}

type Filtered = (Vec<f64>, Vec<bool>, Vec<usize>, Vec<usize>);

fn filter_sparse(rows: usize, cols: usize, values: Vec<f64>, mask: Vec<bool>, min_obs: usize) -> Filtered {
    let mut keep_row = vec![true; rows];
    let mut keep_col = vec![true; cols];
    loop {
        let mut changed = false;
        for i in 0..rows {
            if keep_row[i] {
                let n = (0..cols).filter(|&j| keep_col[j] && mask[i * cols + j]).count();
                if n < min_obs.max(1) {
                    keep_row[i] = false;
                    changed = true;
                }
            }
        }
        for j in 0..cols {
            if keep_col[j] {
                let n = (0..rows).filter(|&i| keep_row[i] && mask[i * cols + j]).count();
                if n < min_obs.max(1) {
                    keep_col[j] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let row_ids: Vec<usize> = (0..rows).filter(|&i| keep_row[i]).collect();
    let col_ids: Vec<usize> = (0..cols).filter(|&j| keep_col[j]).collect();
    let mut out_v = Vec::with_capacity(row_ids.len() * col_ids.len());
    let mut out_m = Vec::with_capacity(row_ids.len() * col_ids.len());
    for &i in &row_ids {
        for &j in &col_ids {
            out_v.push(values[i * cols + j]);
            out_m.push(mask[i * cols + j]);
        }
    }
    (out_v, out_m, row_ids, col_ids)
}

/// Serialise in the same format `load_matrix` reads. Values are written in
/// shortest round-trip form, so a reload reproduces them exactly.
pub fn render_matrix(m: &ObservedMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            if j > 0 {
                out.push(',');
            }
            match m.get(i, j) {
                Some(v) => write!(out, "{v}").unwrap(),
                None => out.push_str("NA"),
            }
        }
        out.push('\n');
    }
    out
}

pub fn save_matrix(m: &ObservedMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_matrix(m)).map_err(|e| Error::io(path, e))
}
