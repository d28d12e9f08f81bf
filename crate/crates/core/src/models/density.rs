//! Log densities of the full models.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use super::hyper::{ModelSpec, Resolved};
use super::kind::{ModelKind, Side, SidePrior};
use super::state::{Aux, FactorState, RowGaussian};
use crate::data::ObservedMatrix;
use crate::error::{Error, Result};

pub fn ln_normal(x: f64, mean: f64, precision: f64) -> f64 {
    0.5 * precision.ln() - 0.5 * (2.0 * PI).ln() - 0.5 * precision * (x - mean).powi(2)
}

pub fn ln_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

pub fn ln_exponential(x: f64, rate: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    rate.ln() - rate * x
}

pub fn ln_laplace(x: f64, rate: f64) -> f64 {
    (rate / 2.0).ln() - rate * x.abs()
}

pub fn ln_inverse_gaussian(x: f64, mean: f64, shape: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    0.5 * shape.ln() - 0.5 * (2.0 * PI * x.powi(3)).ln() - shape * (x - mean).powi(2) / (2.0 * mean * mean * x)
}

pub fn ln_poisson(r: f64, rate: f64) -> f64 {
    if rate == 0.0 {
        return if r == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    r * rate.ln() - rate - ln_gamma(r + 1.0)
}

/// ln Φ(z), accurate in the lower tail.
pub fn ln_normal_cdf(z: f64) -> f64 {
    if z > -30.0 {
        (0.5 * erfc(-z / std::f64::consts::SQRT_2)).ln()
    } else {
        // Mills-ratio asymptotics
        let z2 = z * z;
        -0.5 * z2 - (-z).ln() - 0.5 * (2.0 * PI).ln() + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2)).ln()
    }
}

/// Density of N(mean, 1/precision) truncated to [0, ∞).
pub fn ln_truncated_normal(x: f64, mean: f64, precision: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    ln_normal(x, mean, precision) - ln_normal_cdf(mean * precision.sqrt())
}

fn ln_mv_normal_row(x: &DVector<f64>, g: &RowGaussian, ln_det_precision: f64) -> f64 {
    let d = x - &g.mean;
    let k = x.len() as f64;
    0.5 * ln_det_precision - 0.5 * k * (2.0 * PI).ln() - 0.5 * (g.precision.clone() * &d).dot(&d)
}

fn ln_multivariate_gamma(k: usize, a: f64) -> f64 {
    let kf = k as f64;
    kf * (kf - 1.0) / 4.0 * PI.ln() + (0..k).map(|j| ln_gamma(a - j as f64 / 2.0)).sum::<f64>()
}

fn ln_det_spd(m: &DMatrix<f64>) -> f64 {
    match m.clone().cholesky() {
        Some(c) => {
            let l = c.l_dirty();
            (0..m.nrows()).map(|i| 2.0 * l[(i, i)].ln()).sum()
        }
        None => f64::NEG_INFINITY,
    }
}

/// ln NIW(mu, Sigma | mu0, kappa, nu, W): mu | Sigma ~ N(mu0, Sigma/kappa),
/// Sigma ~ IW(nu, W).
fn ln_niw(g: &RowGaussian, hp: &Resolved) -> f64 {
    let k = g.mean.len();
    let kf = k as f64;
    let nu = hp.nu0;
    let ln_det_sigma = ln_det_spd(&g.covariance);
    let d = &g.mean - &hp.mu0;
    let ln_mean = -0.5 * kf * (2.0 * PI).ln() + 0.5 * kf * hp.beta0_niw.ln() - 0.5 * ln_det_sigma
        - 0.5 * hp.beta0_niw * (g.precision.clone() * &d).dot(&d);
    let ln_iw = 0.5 * nu * ln_det_spd(&hp.w0) - 0.5 * nu * kf * 2f64.ln() - ln_multivariate_gamma(k, nu / 2.0)
        - 0.5 * (nu + kf + 1.0) * ln_det_sigma
        - 0.5 * (&hp.w0 * &g.precision).trace();
    ln_mean + ln_iw
}

fn any_negative(m: &DMatrix<f64>) -> bool {
    m.iter().any(|&x| x < 0.0)
}

fn sum_entries(m: &DMatrix<f64>, mut f: impl FnMut(usize, usize, f64) -> f64) -> f64 {
    let mut s = 0.0;
    for c in 0..m.ncols() {
        for n in 0..m.nrows() {
            s += f(n, c, m[(n, c)]);
        }
    }
    s
}

fn ln_prior_side(kind: ModelKind, hp: &Resolved, state: &FactorState, side: Side, complete: bool) -> Result<f64> {
    let s = side.index();
    let f = state.factor(side);
    let mismatch = || Error::InvalidParameter(format!("auxiliary state does not match {kind}"));
    let prior = kind.prior(side);
    let nonneg = match prior {
        SidePrior::Exponential
        | SidePrior::ExponentialArd
        | SidePrior::TruncNormal
        | SidePrior::TruncNormalHier
        | SidePrior::L21
        | SidePrior::Gamma
        | SidePrior::GammaHier
        | SidePrior::Nmf
        | SidePrior::Volume { nonnegative: true } => true,
        _ => false,
    };
    if nonneg && any_negative(f) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(match (prior, &state.aux) {
        (SidePrior::Gaussian | SidePrior::GaussianUni, _) => sum_entries(f, |_, _, x| ln_normal(x, 0.0, hp.lambda)),
        (SidePrior::Ard, Aux::Ard { lambda }) => sum_entries(f, |_, c, x| ln_normal(x, 0.0, lambda[c])),
        (SidePrior::ExponentialArd, Aux::Ard { lambda }) => sum_entries(f, |_, c, x| ln_exponential(x, lambda[c])),
        (SidePrior::Wishart, Aux::Wishart { rows }) => {
            let g = &rows[s];
            let ld = ln_det_spd(&g.precision);
            let mut t = ln_niw(g, hp);
            for n in 0..f.nrows() {
                t += ln_mv_normal_row(&f.row(n).transpose(), g, ld);
            }
            t
        }
        (SidePrior::Laplace, Aux::Laplace { var, eta }) => {
            let eta_at = |n: usize, c: usize| eta.as_ref().map_or(hp.eta, |e| e[s][(n, c)]);
            let mut t = if complete {
                sum_entries(f, |n, c, x| {
                    let v = var[s][(n, c)];
                    ln_normal(x, 0.0, 1.0 / v) + ln_exponential(v, eta_at(n, c) / 2.0)
                })
            } else {
                // the exponential scale mixture integrates to a Laplace
                // density with rate sqrt(eta)
                sum_entries(f, |n, c, x| ln_laplace(x, eta_at(n, c).sqrt()))
            };
            if let Some(e) = eta {
                t += e[s].iter().map(|&x| ln_inverse_gaussian(x, hp.mu_ig, hp.lambda_ig)).sum::<f64>();
            }
            t
        }
        (SidePrior::Exponential, _) => sum_entries(f, |_, _, x| ln_exponential(x, hp.lambda)),
        (SidePrior::TruncNormal, _) => {
            let (mu, t) = hp.tn[s];
            sum_entries(f, |_, _, x| ln_truncated_normal(x, mu, t))
        }
        (SidePrior::TruncNormalHier, Aux::TruncNormal { mu, tau }) => {
            // TN(x | mu, tau) times the hierarchical prior
            // (1 - Φ(-mu sqrt(tau))) N(mu | mu_mu, tau_mu) G(tau | a, b):
            // the normalising terms cancel
            sum_entries(f, |n, c, x| {
                let (m, t) = (mu[s][(n, c)], tau[s][(n, c)]);
                ln_normal(x, m, t) + ln_normal(m, hp.mu_mu, hp.tau_mu) + ln_gamma_pdf(t, hp.a_tn, hp.b_tn)
            })
        }
        (SidePrior::L21, _) => -hp.lambda / 2.0 * f.row_iter().map(|r| r.sum().powi(2)).sum::<f64>(),
        (SidePrior::Volume { .. }, _) => -hp.gamma / 2.0 * (f.transpose() * f).determinant(),
        (SidePrior::Gamma, _) => sum_entries(f, |_, _, x| ln_gamma_pdf(x, hp.a, hp.b)),
        (SidePrior::GammaHier, Aux::Poisson { h: Some(h), .. }) => {
            let rate = hp.a_prime / hp.b_prime;
            sum_entries(f, |n, _, x| ln_gamma_pdf(x, hp.a, h[s][n]))
                + h[s].iter().map(|&x| ln_gamma_pdf(x, hp.a_prime, rate)).sum::<f64>()
        }
        (SidePrior::Nmf, _) => 0.0,
        _ => return Err(mismatch()),
    })
}

fn ln_joint(spec: &ModelSpec, state: &FactorState, data: &ObservedMatrix, complete: bool) -> Result<f64> {
    let hp = spec.resolve()?;
    let kind = spec.kind;
    let k = state.k();
    let mut total = 0.0;
    if kind.is_gaussian_likelihood() {
        for &(i, j, r) in data.entries() {
            total += ln_normal(r, state.predict_entry(i, j), state.tau);
        }
        total += ln_gamma_pdf(state.tau, hp.alpha_tau, hp.beta_tau);
    } else if kind.is_poisson() {
        if complete {
            let Aux::Poisson { z, .. } = &state.aux else {
                return Err(Error::InvalidParameter("state has no latent counts".into()));
            };
            for (e, &(i, j, r)) in data.entries().iter().enumerate() {
                let zs = &z[e * k..(e + 1) * k];
                if zs.iter().map(|&x| x as f64).sum::<f64>() != r {
                    return Ok(f64::NEG_INFINITY);
                }
                for (c, &zc) in zs.iter().enumerate() {
                    total += ln_poisson(zc as f64, state.u[(i, c)] * state.v[(j, c)]);
                }
            }
        } else {
            for &(i, j, r) in data.entries() {
                total += ln_poisson(r, state.predict_entry(i, j));
            }
        }
    } else {
        total -= 0.5 * super::updates::sse(state, data);
    }
    for side in Side::BOTH {
        total += ln_prior_side(kind, &hp, state, side, complete)?;
    }
    if let Aux::Ard { lambda } = &state.aux {
        total += lambda.iter().map(|&l| ln_gamma_pdf(l, hp.alpha0, hp.beta0)).sum::<f64>();
    }
    Ok(if total.is_nan() { f64::NEG_INFINITY } else { total })
}

/// Log joint density log p(R | θ) + log p(θ), with Laplace mixing variances
/// and Poisson latent counts integrated out. The volume, L²₁ and GTTN
/// hierarchical priors are unnormalised. A constraint violation gives -∞.
pub fn log_joint(spec: &ModelSpec, state: &FactorState, data: &ObservedMatrix) -> Result<f64> {
    ln_joint(spec, state, data, false)
}

/// As `log_joint`, but for the augmented model: includes the Laplace mixing
/// variances and replaces the Poisson likelihood of R by that of the
/// latent counts Z.
pub fn log_joint_complete(spec: &ModelSpec, state: &FactorState, data: &ObservedMatrix) -> Result<f64> {
    ln_joint(spec, state, data, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_log_cdf_is_continuous() {
        let a = ln_normal_cdf(-29.999);
        let b = ln_normal_cdf(-30.001);
        assert!((a - b).abs() < 0.1, "{a} {b}");
        assert!((ln_normal_cdf(0.0) - 0.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn densities_match_known_values() {
        assert!((ln_normal(0.0, 0.0, 1.0) + 0.5 * (2.0 * PI).ln()).abs() < 1e-14);
        assert!((ln_gamma_pdf(1.0, 1.0, 1.0) + 1.0).abs() < 1e-14);
        assert!((ln_poisson(2.0, 1.0) - (-1.0 - 2f64.ln())).abs() < 1e-14);
        assert_eq!(ln_poisson(0.0, 0.0), 0.0);
        assert_eq!(ln_exponential(-1.0, 1.0), f64::NEG_INFINITY);
        // half-normal: TN(0, 1) at 0 is 2 φ(0)
        assert!((ln_truncated_normal(0.0, 0.0, 1.0) - (2.0 / (2.0 * PI).sqrt()).ln()).abs() < 1e-14);
    }
}
