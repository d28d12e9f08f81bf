//! Conditionals of hierarchical prior parameters.

use nalgebra::{DMatrix, DVector};

use super::hyper::Resolved;
use super::kind::{ModelKind, Side};
use super::state::{Aux, FactorState, RowGaussian};
use crate::error::{Error, Result};
use crate::linalg::symmetrise;
use crate::rng::RngHandle;
use crate::samplers::{self, NiwParams};

/// Smallest |U_ik| used in the Laplace scale conditional.
pub const LAPLACE_ABS_FLOOR: f64 = 1e-12;

fn mismatch(what: &str) -> Error {
    Error::InvalidParameter(format!("state has no {what} auxiliary variables"))
}

/// Gamma(shape, rate) conditional of lambda_k for GGGA (Gaussian) or GEEA
/// (exponential).
pub fn ard_posterior(kind: ModelKind, hp: &Resolved, state: &FactorState, k: usize) -> (f64, f64) {
    let (i, j) = (state.u.nrows() as f64, state.v.nrows() as f64);
    if kind == ModelKind::Geea {
        (
            hp.alpha0 + i + j,
            hp.beta0 + state.u.column(k).sum() + state.v.column(k).sum(),
        )
    } else {
        (
            hp.alpha0 + i / 2.0 + j / 2.0,
            hp.beta0 + 0.5 * state.u.column(k).norm_squared() + 0.5 * state.v.column(k).norm_squared(),
        )
    }
}

pub fn update_ard(kind: ModelKind, hp: &Resolved, state: &mut FactorState, rng: &mut RngHandle) -> Result<()> {
    let k = state.k();
    let params: Vec<(f64, f64)> = (0..k).map(|c| ard_posterior(kind, hp, state, c)).collect();
    let Aux::Ard { lambda } = &mut state.aux else {
        return Err(mismatch("ARD"));
    };
    for (c, (shape, rate)) in params.into_iter().enumerate() {
        lambda[c] = samplers::gamma(shape, rate, rng)?;
    }
    Ok(())
}

/// Normal-inverse-Wishart posterior for the row distribution of `factor`.
///
/// Uses the scatter about the row mean; with n rows, row mean x̄ and
/// scatter S = sum (x_i - x̄)(x_i - x̄)^T:
/// kappa* = beta0 + n, nu* = nu0 + n, mu* = (beta0 mu0 + n x̄)/kappa*,
/// W* = W0 + S + beta0 n / kappa* (mu0 - x̄)(mu0 - x̄)^T.
pub fn wishart_posterior(hp: &Resolved, factor: &DMatrix<f64>) -> NiwParams {
    let n = factor.nrows();
    let k = factor.ncols();
    if n == 0 {
        return NiwParams {
            mean: hp.mu0.clone(),
            kappa: hp.beta0_niw,
            dof: hp.nu0,
            scale: hp.w0.clone(),
        };
    }
    let nf = n as f64;
    let mean = DVector::from_fn(k, |c, _| factor.column(c).sum() / nf);
    let mut scatter = DMatrix::zeros(k, k);
    for i in 0..n {
        let d = factor.row(i).transpose() - &mean;
        scatter.ger(1.0, &d, &d, 1.0);
    }
    let kappa = hp.beta0_niw + nf;
    let diff = &hp.mu0 - &mean;
    let mut scale = &hp.w0 + scatter + (&diff * diff.transpose()) * (hp.beta0_niw * nf / kappa);
    symmetrise(&mut scale);
    NiwParams {
        mean: (&hp.mu0 * hp.beta0_niw + &mean * nf) / kappa,
        kappa,
        dof: hp.nu0 + nf,
        scale,
    }
}

pub fn update_wishart(hp: &Resolved, state: &mut FactorState, rng: &mut RngHandle) -> Result<()> {
    let post = [wishart_posterior(hp, &state.u), wishart_posterior(hp, &state.v)];
    let Aux::Wishart { rows } = &mut state.aux else {
        return Err(mismatch("Wishart"));
    };
    for (slot, p) in rows.iter_mut().zip(post) {
        let d = samplers::normal_inverse_wishart(&p, rng)?;
        *slot = RowGaussian { mean: d.mean, covariance: d.covariance, precision: d.precision };
    }
    Ok(())
}

/// IG(mean, shape) conditional of 1 / var_ik, given the entry and the rate
/// parameter eta of its exponential mixing prior Exp(eta / 2).
pub fn laplace_scale_posterior(x: f64, eta: f64) -> (f64, f64) {
    (eta.sqrt() / x.abs().max(LAPLACE_ABS_FLOOR), eta)
}

/// IG(mean, shape) conditional of 1 / eta_ik under an IG(mu_ig, lambda_ig)
/// prior on eta_ik and var_ik ~ Exp(eta_ik / 2).
///
/// The conditional of eta is GIG(1/2, var + lambda/mu^2, lambda), so its
/// reciprocal is inverse Gaussian with shape `var + lambda/mu^2` and mean
/// `sqrt((var + lambda/mu^2) / lambda)`.
pub fn laplace_eta_posterior(var: f64, mu_ig: f64, lambda_ig: f64) -> (f64, f64) {
    let a = var + lambda_ig / (mu_ig * mu_ig);
    ((a / lambda_ig).sqrt(), a)
}

/// Redraw the mixing variances (and for GLLI the per-entry eta).
pub fn update_laplace(hp: &Resolved, state: &mut FactorState, rng: &mut RngHandle) -> Result<()> {
    let FactorState { u, v, aux, .. } = state;
    let Aux::Laplace { var, eta } = aux else {
        return Err(mismatch("Laplace"));
    };
    for (s, f) in [&*u, &*v].into_iter().enumerate() {
        for c in 0..f.ncols() {
            for n in 0..f.nrows() {
                let e = eta.as_ref().map_or(hp.eta, |e| e[s][(n, c)]);
                let (mean, shape) = laplace_scale_posterior(f[(n, c)], e);
                var[s][(n, c)] = 1.0 / samplers::inverse_gaussian(mean, shape, rng)?;
            }
        }
        if let Some(eta) = eta.as_mut() {
            for c in 0..f.ncols() {
                for n in 0..f.nrows() {
                    let (mean, shape) = laplace_eta_posterior(var[s][(n, c)], hp.mu_ig, hp.lambda_ig);
                    eta[s][(n, c)] = 1.0 / samplers::inverse_gaussian(mean, shape, rng)?;
                }
            }
        }
    }
    Ok(())
}

/// Conditional N(m, 1/t) of mu_ik: returns (m, t).
pub fn gttn_mean_posterior(hp: &Resolved, x: f64, tau_ik: f64) -> (f64, f64) {
    let t = tau_ik + hp.tau_mu;
    ((tau_ik * x + hp.mu_mu * hp.tau_mu) / t, t)
}

/// Conditional Gamma(shape, rate) of tau_ik.
pub fn gttn_precision_posterior(hp: &Resolved, x: f64, mu_ik: f64) -> (f64, f64) {
    (hp.a_tn + 0.5, hp.b_tn + (x - mu_ik).powi(2) / 2.0)
}

pub fn update_gttn_hyper(hp: &Resolved, state: &mut FactorState, rng: &mut RngHandle) -> Result<()> {
    let FactorState { u, v, aux, .. } = state;
    let Aux::TruncNormal { mu, tau } = aux else {
        return Err(mismatch("truncated-normal"));
    };
    for side in Side::BOTH {
        let s = side.index();
        let f = if s == 0 { &*u } else { &*v };
        for c in 0..f.ncols() {
            for n in 0..f.nrows() {
                let x = f[(n, c)];
                let (m, t) = gttn_mean_posterior(hp, x, tau[s][(n, c)]);
                mu[s][(n, c)] = samplers::gaussian(m, t, rng)?;
                let (shape, rate) = gttn_precision_posterior(hp, x, mu[s][(n, c)]);
                tau[s][(n, c)] = samplers::gamma(shape, rate, rng)?;
            }
        }
    }
    Ok(())
}
