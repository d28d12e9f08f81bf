//! Partially observed matrices, ingestion, synthetic data and splits.

mod io;
mod split;
mod synth;

pub use io::{load_matrix, parse_matrix, render_matrix, save_matrix, LoadOptions};
pub use split::{make_holdout, make_kfold, SplitKind, SplitPlan};
pub use synth::{generate_synthetic, Family, SynthSpec, SyntheticData};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::RngHandle;
use crate::samplers::standard_normal;

/// One observed entry seen from a row (or column): the index along the
/// other axis, the value and the entry's position in row-major Ω order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obs {
    pub other: usize,
    pub value: f64,
    pub entry: usize,
}

/// A data matrix together with its observation mask Ω.
///
/// Observed entries are numbered in row-major order; `by_row` and `by_col`
/// give the per-row and per-column views used by the samplers.
#[derive(Debug, Clone)]
pub struct ObservedMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
    entries: Vec<(usize, usize, f64)>,
    by_row: Vec<Vec<Obs>>,
    by_col: Vec<Vec<Obs>>,
    row_ids: Vec<usize>,
    col_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub name: String,
    pub rows: usize,
    pub columns: usize,
    pub fraction_observed: f64,
}

impl ObservedMatrix {
    /// Build from row-major values and mask. Unobserved values are ignored
    /// (stored as NaN). Every row and column must have an observed entry.
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        let row_ids = (0..rows).collect();
        let col_ids = (0..cols).collect();
        Self::with_ids(rows, cols, values, mask, row_ids, col_ids)
    }

    pub(crate) fn with_ids(
        rows: usize,
        cols: usize,
        mut values: Vec<f64>,
        mask: Vec<bool>,
        row_ids: Vec<usize>,
        col_ids: Vec<usize>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyMatrix(format!("shape {rows}x{cols}")));
        }
        if values.len() != rows * cols || mask.len() != rows * cols {
            return Err(Error::InvalidShape(format!(
                "expected {} values and mask entries for {rows}x{cols}, got {} and {}",
                rows * cols,
                values.len(),
                mask.len()
            )));
        }
        let mut entries = Vec::new();
        let mut by_row = vec![Vec::new(); rows];
        let mut by_col = vec![Vec::new(); cols];
        for i in 0..rows {
            for j in 0..cols {
                let idx = i * cols + j;
                if mask[idx] {
                    let v = values[idx];
                    if !v.is_finite() {
                        return Err(Error::Incompatible(format!(
                            "observed value at (row {i}, column {j}) is not finite"
                        )));
                    }
                    let entry = entries.len();
                    entries.push((i, j, v));
                    by_row[i].push(Obs { other: j, value: v, entry });
                    by_col[j].push(Obs { other: i, value: v, entry });
                } else {
                    values[idx] = f64::NAN;
                }
            }
        }
        if entries.is_empty() {
            return Err(Error::EmptyMatrix("no observed entries".into()));
        }
        if let Some(i) = by_row.iter().position(|r| r.is_empty()) {
            return Err(Error::EmptyInput(format!("row {i} has no observed entries")));
        }
        if let Some(j) = by_col.iter().position(|c| c.is_empty()) {
            return Err(Error::EmptyInput(format!("column {j} has no observed entries")));
        }
        Ok(ObservedMatrix {
            rows,
            cols,
            values,
            mask,
            entries,
            by_row,
            by_col,
            row_ids,
            col_ids,
        })
    }

    /// Fully observed matrix.
    pub fn dense(m: &DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = m.shape();
        let values = (0..rows * cols).map(|idx| m[(idx / cols, idx % cols)]).collect();
        Self::new(rows, cols, values, vec![true; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn n_observed(&self) -> usize {
        self.entries.len()
    }

    pub fn fraction_observed(&self) -> f64 {
        self.entries.len() as f64 / (self.rows * self.cols) as f64
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.cols + j]
    }

    /// Value at (i, j) if observed.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.is_observed(i, j).then(|| self.values[i * self.cols + j])
    }

    /// Row-major values (NaN where unobserved).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Observed entries `(i, j, value)` in row-major order.
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[Obs] {
        &self.by_row[i]
    }

    pub fn col(&self, j: usize) -> &[Obs] {
        &self.by_col[j]
    }

    pub fn by_row(&self) -> &[Vec<Obs>] {
        &self.by_row
    }

    pub fn by_col(&self) -> &[Vec<Obs>] {
        &self.by_col
    }

    /// Original (pre-filtering) row index of each row.
    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn col_ids(&self) -> &[usize] {
        &self.col_ids
    }

    pub fn meta(&self, name: impl Into<String>) -> DatasetMeta {
        DatasetMeta {
            name: name.into(),
            rows: self.rows,
            columns: self.cols,
            fraction_observed: self.fraction_observed(),
        }
    }

    /// Same values restricted to a sub-mask (which must be within Ω).
    pub fn restrict(&self, keep: &[bool]) -> Result<Self> {
        if keep.len() != self.mask.len() {
            return Err(Error::InvalidShape("mask length mismatch".into()));
        }
        let mask: Vec<bool> = keep.iter().zip(&self.mask).map(|(a, b)| *a && *b).collect();
        Self::with_ids(
            self.rows,
            self.cols,
            self.values.clone(),
            mask,
            self.row_ids.clone(),
            self.col_ids.clone(),
        )
    }

    /// Same mask with new observed values (indexed by entry).
    pub fn with_entry_values(&self, new_values: &[f64]) -> Result<Self> {
        if new_values.len() != self.entries.len() {
            return Err(Error::InvalidShape("one value per observed entry required".into()));
        }
        let mut values = self.values.clone();
        for (&(i, j, _), &v) in self.entries.iter().zip(new_values) {
            values[i * self.cols + j] = v;
        }
        Self::with_ids(
            self.rows,
            self.cols,
            values,
            self.mask.clone(),
            self.row_ids.clone(),
            self.col_ids.clone(),
        )
    }

    /// Error naming the first observed cell that is not a nonnegative integer.
    pub fn check_counts(&self) -> Result<()> {
        for &(i, j, v) in &self.entries {
            if v < 0.0 || (v - v.round()).abs() > 1e-9 {
                return Err(Error::Incompatible(format!(
                    "count models need nonnegative integer data; cell (row {}, column {}) = {v}",
                    self.row_ids[i] + 1,
                    self.col_ids[j] + 1
                )));
            }
        }
        Ok(())
    }

    /// Error naming the first negative observed cell.
    pub fn check_nonnegative(&self) -> Result<()> {
        for &(i, j, v) in &self.entries {
            if v < 0.0 {
                return Err(Error::Incompatible(format!(
                    "nonnegative data required; cell (row {}, column {}) = {v}",
                    self.row_ids[i] + 1,
                    self.col_ids[j] + 1
                )));
            }
        }
        Ok(())
    }

    /// Round observed values half-up to integers (for count models).
    pub fn round_to_counts(&self) -> Result<Self> {
        let rounded: Vec<f64> = self.entries.iter().map(|e| (e.2 + 0.5).floor()).collect();
        let out = self.with_entry_values(&rounded)?;
        out.check_nonnegative()?;
        Ok(out)
    }

    /// Population variance of the observed values.
    pub fn observed_variance(&self) -> f64 {
        let n = self.entries.len() as f64;
        let mean = self.entries.iter().map(|e| e.2).sum::<f64>() / n;
        self.entries.iter().map(|e| (e.2 - mean).powi(2)).sum::<f64>() / n
    }
}

/// How the noise-to-signal ratio is turned into a noise variance.
pub const NOISE_CONVENTION: &str = "noise_variance = ratio * variance(observed data)";

/// Add Gaussian noise with variance `noise_to_signal * Var(observed)` to
/// every observed entry. The mask is unchanged.
pub fn add_noise(m: &ObservedMatrix, noise_to_signal: f64, seed: u64) -> Result<ObservedMatrix> {
    if !(noise_to_signal >= 0.0) || !noise_to_signal.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise-to-signal ratio must be >= 0, got {noise_to_signal}"
        )));
    }
    if noise_to_signal == 0.0 {
        return Ok(m.clone());
    }
    let sd = (noise_to_signal * m.observed_variance()).sqrt();
    let mut rng = RngHandle::new(seed);
    let noisy: Vec<f64> = m
        .entries()
        .iter()
        .map(|e| e.2 + sd * standard_normal(&mut rng))
        .collect();
    m.with_entry_values(&noisy)
}

/// Fisher-Yates shuffle of indices with a seeded stream.
pub(crate) fn shuffled(n: usize, rng: &mut RngHandle) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}
