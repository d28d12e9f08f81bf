//! Fold assignments over the observed entries.
//!
//! A split must leave every row and column with at least one training
//! observation. After a random assignment, entries that would empty a row or
//! column of a training set are swapped with randomly chosen entries from
//! other folds, so fold sizes are preserved exactly.

use rand::Rng;

use super::{shuffled, ObservedMatrix};
use crate::error::{Error, Result};
use crate::rng::RngHandle;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitKind {
    KFold,
    /// Fold 0 is the held-out test set, fold 1 the training set.
    Holdout { fraction: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub kind: SplitKind,
    pub n_folds: usize,
    pub seed: u64,
    /// Fold id of each observed entry (row-major Ω order).
    pub assignment: Vec<usize>,
}

const PARTNER_ATTEMPTS: usize = 4000;

impl SplitPlan {
    /// Folds whose complement is used for training.
    pub fn test_folds(&self) -> Vec<usize> {
        match self.kind {
            SplitKind::KFold => (0..self.n_folds).collect(),
            SplitKind::Holdout { .. } => vec![0],
        }
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }

    /// Training matrix: everything outside `fold`.
    pub fn train(&self, m: &ObservedMatrix, fold: usize) -> Result<ObservedMatrix> {
        let mut keep = vec![false; m.rows() * m.cols()];
        for (e, &(i, j, _)) in m.entries().iter().enumerate() {
            keep[i * m.cols() + j] = self.assignment[e] != fold;
        }
        m.restrict(&keep)
    }

    /// Held-out entries `(i, j, value)` of `fold`.
    pub fn test(&self, m: &ObservedMatrix, fold: usize) -> Vec<(usize, usize, f64)> {
        m.entries()
            .iter()
            .zip(&self.assignment)
            .filter(|(_, &f)| f == fold)
            .map(|(e, _)| *e)
            .collect()
    }
}

struct Coverage<'a> {
    m: &'a ObservedMatrix,
    n_folds: usize,
    protected: Vec<bool>,
    row_counts: Vec<usize>,
    col_counts: Vec<usize>,
}

impl<'a> Coverage<'a> {
    fn new(m: &'a ObservedMatrix, n_folds: usize, protected: Vec<bool>, assignment: &[usize]) -> Self {
        let mut c = Coverage {
            m,
            n_folds,
            protected,
            row_counts: vec![0; n_folds * m.rows()],
            col_counts: vec![0; n_folds * m.cols()],
        };
        for (e, &(i, j, _)) in m.entries().iter().enumerate() {
            c.row_counts[assignment[e] * m.rows() + i] += 1;
            c.col_counts[assignment[e] * m.cols() + j] += 1;
        }
        c
    }

    fn row_violated(&self, f: usize, i: usize) -> bool {
        self.protected[f] && self.row_counts[f * self.m.rows() + i] == self.m.row(i).len()
    }

    fn col_violated(&self, f: usize, j: usize) -> bool {
        self.protected[f] && self.col_counts[f * self.m.cols() + j] == self.m.col(j).len()
    }

    fn first_violation(&self) -> Option<(usize, bool, usize)> {
        for f in 0..self.n_folds {
            if let Some(i) = (0..self.m.rows()).find(|&i| self.row_violated(f, i)) {
                return Some((f, true, i));
            }
            if let Some(j) = (0..self.m.cols()).find(|&j| self.col_violated(f, j)) {
                return Some((f, false, j));
            }
        }
        None
    }

    fn local_violations(&self, folds: [usize; 2], rows: [usize; 2], cols: [usize; 2]) -> usize {
        let mut n = 0;
        for f in folds {
            for i in rows {
                n += self.row_violated(f, i) as usize;
            }
            for j in cols {
                n += self.col_violated(f, j) as usize;
            }
        }
        n
    }

    fn shift(&mut self, e: usize, from: usize, to: usize) {
        let (i, j, _) = self.m.entries()[e];
        let (r, c) = (self.m.rows(), self.m.cols());
        self.row_counts[from * r + i] -= 1;
        self.col_counts[from * c + j] -= 1;
        self.row_counts[to * r + i] += 1;
        self.col_counts[to * c + j] += 1;
    }

    /// Swap the folds of two entries if that lowers the local violation count.
    fn try_swap(&mut self, assignment: &mut [usize], a: usize, b: usize) -> bool {
        let (fa, fb) = (assignment[a], assignment[b]);
        if fa == fb {
            return false;
        }
        let (ia, ja, _) = self.m.entries()[a];
        let (ib, jb, _) = self.m.entries()[b];
        let scope = ([fa, fb], [ia, ib], [ja, jb]);
        let before = self.local_violations(scope.0, scope.1, scope.2);
        self.shift(a, fa, fb);
        self.shift(b, fb, fa);
        let after = self.local_violations(scope.0, scope.1, scope.2);
        if after < before {
            assignment[a] = fb;
            assignment[b] = fa;
            true
        } else {
            self.shift(a, fb, fa);
            self.shift(b, fa, fb);
            false
        }
    }
}

fn repair(m: &ObservedMatrix, n_folds: usize, protected: Vec<bool>, assignment: &mut [usize], rng: &mut RngHandle) -> Result<()> {
    let mut cov = Coverage::new(m, n_folds, protected, assignment);
    let n = assignment.len();
    while let Some((fold, is_row, line)) = cov.first_violation() {
        let candidates: Vec<usize> = if is_row {
            m.row(line).iter().map(|o| o.entry).collect()
        } else {
            m.col(line).iter().map(|o| o.entry).collect()
        };
        let mut fixed = false;
        for _ in 0..PARTNER_ATTEMPTS {
            let a = candidates[rng.random_range(0..candidates.len())];
            let b = rng.random_range(0..n);
            debug_assert_eq!(assignment[a], fold);
            if cov.try_swap(assignment, a, b) {
                fixed = true;
                break;
            }
        }
        if !fixed {
            let what = if is_row { "row" } else { "column" };
            return Err(Error::InfeasibleSplit(format!(
                "cannot keep {what} {line} observed in the training set of fold {fold}"
            )));
        }
    }
    Ok(())
}

/// Partition Ω into `n_folds` folds of sizes differing by at most one.
pub fn make_kfold(m: &ObservedMatrix, n_folds: usize, seed: u64) -> Result<SplitPlan> {
    if n_folds < 2 {
        return Err(Error::InvalidParameter(format!("need >= 2 folds, got {n_folds}")));
    }
    let n = m.n_observed();
    if n < n_folds {
        return Err(Error::InfeasibleSplit(format!("{n} observed entries for {n_folds} folds")));
    }
    if let Some(i) = (0..m.rows()).find(|&i| m.row(i).len() < 2) {
        return Err(Error::InfeasibleSplit(format!("row {i} has a single observed entry")));
    }
    if let Some(j) = (0..m.cols()).find(|&j| m.col(j).len() < 2) {
        return Err(Error::InfeasibleSplit(format!("column {j} has a single observed entry")));
    }
    let mut rng = RngHandle::new(seed);
    let order = shuffled(n, &mut rng);
    let mut assignment = vec![0; n];
    for (pos, &e) in order.iter().enumerate() {
        assignment[e] = pos % n_folds;
    }
    repair(m, n_folds, vec![true; n_folds], &mut assignment, &mut rng)?;
    Ok(SplitPlan {
        kind: SplitKind::KFold,
        n_folds,
        seed,
        assignment,
    })
}

/// Hold out `round(fraction * |Ω|)` entries (at least one) as a test set.
pub fn make_holdout(m: &ObservedMatrix, fraction: f64, seed: u64) -> Result<SplitPlan> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!("holdout fraction must be in (0,1), got {fraction}")));
    }
    let n = m.n_observed();
    let n_test = ((fraction * n as f64).round() as usize).max(1);
    if n_test + m.rows().max(m.cols()) > n {
        return Err(Error::InfeasibleSplit(format!(
            "holding out {n_test} of {n} entries leaves too few to cover {} rows and {} columns",
            m.rows(),
            m.cols()
        )));
    }
    let mut rng = RngHandle::new(seed);
    let order = shuffled(n, &mut rng);
    let mut assignment = vec![1; n];
    for &e in order.iter().take(n_test) {
        assignment[e] = 0;
    }
    repair(m, 2, vec![true, false], &mut assignment, &mut rng)?;
    Ok(SplitPlan {
        kind: SplitKind::Holdout { fraction },
        n_folds: 2,
        seed,
        assignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn full(rows: usize, cols: usize) -> ObservedMatrix {
        let values = (0..rows * cols).map(|x| x as f64).collect();
        ObservedMatrix::new(rows, cols, values, vec![true; rows * cols]).unwrap()
    }

    #[test]
    fn exact_division_sizes() {
        let m = full(2, 5);
        let plan = make_kfold(&m, 5, 1).unwrap();
        assert_eq!(plan.fold_sizes(), vec![2, 2, 2, 2, 2]);
    }

    #[test]
    fn holdout_rounding() {
        let m = full(40, 25);
        let plan = make_holdout(&m, 0.1, 4).unwrap();
        assert_eq!(plan.fold_sizes()[0], 100);
        assert_eq!(plan.test(&m, 0).len(), 100);
        assert_eq!(plan.train(&m, 0).unwrap().n_observed(), 900);
    }

    #[test]
    fn deterministic_under_seed() {
        let m = full(12, 9);
        assert_eq!(make_kfold(&m, 5, 77).unwrap(), make_kfold(&m, 5, 77).unwrap());
        assert_ne!(make_kfold(&m, 5, 77).unwrap(), make_kfold(&m, 5, 78).unwrap());
    }

    #[test]
    fn aggressive_holdout_still_covers() {
        let m = full(30, 20);
        // 90% held out leaves 60 entries for 30 rows and 20 columns
        let plan = make_holdout(&m, 0.9, 2).unwrap();
        assert!(plan.train(&m, 0).is_ok());
    }

    #[test]
    fn infeasible_splits_are_reported() {
        let m = ObservedMatrix::new(2, 2, vec![1.0; 4], vec![true, true, true, false]).unwrap();
        assert!(matches!(make_kfold(&m, 2, 0), Err(Error::InfeasibleSplit(_))));
        let m = full(10, 10);
        assert!(matches!(make_holdout(&m, 0.95, 0), Err(Error::InfeasibleSplit(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn kfold_partitions_and_covers(rows in 3usize..12, cols in 3usize..12, folds in 2usize..6, seed in 0u64..1000) {
            let m = full(rows, cols);
            let plan = make_kfold(&m, folds, seed).unwrap();
            let sizes = plan.fold_sizes();
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
            prop_assert_eq!(sizes.iter().sum::<usize>(), m.n_observed());
            for f in 0..folds {
                let train = plan.train(&m, f).unwrap();
                let test = plan.test(&m, f);
                prop_assert_eq!(train.n_observed() + test.len(), m.n_observed());
                for &(i, j, _) in &test {
                    prop_assert!(!train.is_observed(i, j));
                }
            }
        }
    }
}
