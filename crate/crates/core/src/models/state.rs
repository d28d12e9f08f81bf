use nalgebra::{DMatrix, DVector};

use super::kind::{ModelKind, Side};
use crate::error::{Error, Result};

/// Row-distribution parameters of one factor matrix under the Wishart model.
#[derive(Debug, Clone, PartialEq)]
pub struct RowGaussian {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub precision: DMatrix<f64>,
}

/// Model-specific auxiliary variables. Two-element arrays are indexed by
/// side: `[U, V]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Aux {
    None,
    /// Per-factor precisions lambda_k (GGGA, GEEA).
    Ard { lambda: DVector<f64> },
    /// (mu, Sigma) for rows of U and V (GGGW).
    Wishart { rows: [RowGaussian; 2] },
    /// Per-entry mixing variances, and for GLLI per-entry eta.
    Laplace {
        var: [DMatrix<f64>; 2],
        eta: Option<[DMatrix<f64>; 2]>,
    },
    /// Per-entry truncated-normal means and precisions (GTTN).
    TruncNormal {
        mu: [DMatrix<f64>; 2],
        tau: [DMatrix<f64>; 2],
    },
    /// Latent counts, `z[e * K + k]` for observed entry `e`, and for PGGG the
    /// per-row / per-column rates.
    Poisson {
        z: Vec<u32>,
        h: Option<[DVector<f64>; 2]>,
    },
}

/// Counters for guarded numerical fallbacks.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Diagnostics {
    /// Volume-prior entries whose conditional precision was not positive.
    pub volume_fallbacks: u64,
}

/// Current Gibbs state.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorState {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    /// Noise precision (unused by Poisson models and NMF).
    pub tau: f64,
    pub aux: Aux,
    pub diagnostics: Diagnostics,
}

impl FactorState {
    pub fn k(&self) -> usize {
        self.u.ncols()
    }

    pub fn factor(&self, side: Side) -> &DMatrix<f64> {
        match side {
            Side::U => &self.u,
            Side::V => &self.v,
        }
    }

    pub fn factor_mut(&mut self, side: Side) -> &mut DMatrix<f64> {
        match side {
            Side::U => &mut self.u,
            Side::V => &mut self.v,
        }
    }

    /// U V^T.
    pub fn reconstruction(&self) -> DMatrix<f64> {
        &self.u * self.v.transpose()
    }

    pub fn predict_entry(&self, i: usize, j: usize) -> f64 {
        self.u.row(i).dot(&self.v.row(j))
    }

    /// Check the support constraints of `kind`.
    pub fn check_invariants(&self, kind: ModelKind) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("{kind} state invariant violated: {what}")));
        if self.u.iter().chain(self.v.iter()).any(|x| !x.is_finite()) {
            return bad("non-finite factor entry");
        }
        if kind.u_nonnegative() && self.u.iter().any(|&x| x < 0.0) {
            return bad("negative entry in U");
        }
        if kind.v_nonnegative() && self.v.iter().any(|&x| x < 0.0) {
            return bad("negative entry in V");
        }
        if kind.is_gaussian_likelihood() && !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("noise precision not positive");
        }
        let all_pos = |m: &DMatrix<f64>| m.iter().all(|&x| x > 0.0 && x.is_finite());
        match &self.aux {
            Aux::None => {}
            Aux::Ard { lambda } => {
                if !lambda.iter().all(|&x| x > 0.0 && x.is_finite()) {
                    return bad("ARD precision not positive");
                }
            }
            Aux::Wishart { rows } => {
                for r in rows {
                    if r.covariance.clone().cholesky().is_none() {
                        return bad("row covariance not SPD");
                    }
                }
            }
            Aux::Laplace { var, eta } => {
                if !var.iter().all(all_pos) {
                    return bad("Laplace variance not positive");
                }
                if let Some(eta) = eta {
                    if !eta.iter().all(all_pos) {
                        return bad("Laplace eta not positive");
                    }
                }
            }
            Aux::TruncNormal { mu, tau } => {
                if !tau.iter().all(all_pos) || mu.iter().any(|m| m.iter().any(|x| !x.is_finite())) {
                    return bad("truncated-normal parameters invalid");
                }
            }
            Aux::Poisson { h, .. } => {
                if let Some(h) = h {
                    if !h.iter().all(|v| v.iter().all(|&x| x > 0.0 && x.is_finite())) {
                        return bad("hierarchical rate not positive");
                    }
                }
            }
        }
        Ok(())
    }
}
