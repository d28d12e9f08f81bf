//! Initial states, prior (forward) simulation and data regeneration.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::hyper::{ModelSpec, Resolved};
use super::kind::{ModelKind, Side, SidePrior};
use super::poisson::update_counts;
use super::state::{Aux, Diagnostics, FactorState, RowGaussian};
use crate::data::ObservedMatrix;
use crate::error::{Error, Result};
use crate::linalg::spd_inverse;
use crate::rng::RngHandle;
use crate::samplers::{self, NiwParams};

const HYPER_STREAM: u64 = 1;
const U_STREAM: u64 = 2;
const V_STREAM: u64 = 3;
const TAU_STREAM: u64 = 4;
const COUNT_STREAM: u64 = 5;

fn side_stream(side: Side) -> u64 {
    match side {
        Side::U => U_STREAM,
        Side::V => V_STREAM,
    }
}

/// Prior draw of one L²₁ row: the row sum s has s² ~ Gamma(K/2, rate
/// lambda/2) and the direction is uniform on the simplex.
fn l21_row(k: usize, lambda: f64, rng: &mut RngHandle) -> Result<Vec<f64>> {
    let s = samplers::gamma(k as f64 / 2.0, lambda / 2.0, rng)?.sqrt();
    let e: Vec<f64> = (0..k).map(|_| samplers::exponential(1.0, rng)).collect::<Result<_>>()?;
    let total: f64 = e.iter().sum();
    Ok(e.into_iter().map(|x| s * x / total).collect())
}

/// Draw one factor matrix from its prior given the hierarchical state.
fn draw_factor(
    kind: ModelKind,
    hp: &Resolved,
    aux: &Aux,
    side: Side,
    n: usize,
    k: usize,
    rng: &mut RngHandle,
) -> Result<DMatrix<f64>> {
    let s = side.index();
    let mut f = DMatrix::zeros(n, k);
    match kind.prior(side) {
        SidePrior::Wishart => {
            let Aux::Wishart { rows } = aux else { unreachable!() };
            for i in 0..n {
                let row = samplers::multivariate_gaussian(&rows[s].mean, &rows[s].covariance, rng)?;
                f.set_row(i, &row.transpose());
            }
            return Ok(f);
        }
        SidePrior::L21 => {
            for i in 0..n {
                for (c, x) in l21_row(k, hp.lambda, rng)?.into_iter().enumerate() {
                    f[(i, c)] = x;
                }
            }
            return Ok(f);
        }
        _ => {}
    }
    for i in 0..n {
        for c in 0..k {
            f[(i, c)] = match (kind.prior(side), aux) {
                (SidePrior::Gaussian | SidePrior::GaussianUni, _) => samplers::gaussian(0.0, hp.lambda, rng)?,
                (SidePrior::Volume { nonnegative }, _) => {
                    let x = samplers::gaussian(0.0, hp.lambda, rng)?;
                    if nonnegative {
                        x.abs()
                    } else {
                        x
                    }
                }
                (SidePrior::Ard, Aux::Ard { lambda }) => samplers::gaussian(0.0, lambda[c], rng)?,
                (SidePrior::Laplace, Aux::Laplace { var, .. }) => samplers::gaussian(0.0, 1.0 / var[s][(i, c)], rng)?,
                (SidePrior::Exponential, _) => samplers::exponential(hp.lambda, rng)?,
                (SidePrior::ExponentialArd, Aux::Ard { lambda }) => samplers::exponential(lambda[c], rng)?,
                (SidePrior::TruncNormal, _) => samplers::truncated_normal(hp.tn[s].0, hp.tn[s].1, rng)?,
                (SidePrior::TruncNormalHier, Aux::TruncNormal { mu, tau }) => {
                    samplers::truncated_normal(mu[s][(i, c)], tau[s][(i, c)], rng)?
                }
                (SidePrior::Gamma, _) => samplers::gamma(hp.a, hp.b, rng)?,
                (SidePrior::GammaHier, Aux::Poisson { h: Some(h), .. }) => samplers::gamma(hp.a, h[s][i], rng)?,
                (prior, _) => {
                    return Err(Error::InvalidParameter(format!("cannot draw {prior:?} factor for {kind}")))
                }
            };
        }
    }
    Ok(f)
}

fn row_gaussian(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<RowGaussian> {
    let precision = spd_inverse(&covariance)?;
    Ok(RowGaussian { mean, covariance, precision })
}

/// Hierarchical variables at their prior means.
fn aux_at_prior_mean(kind: ModelKind, hp: &Resolved, shape: [usize; 2], k: usize, n_obs: usize) -> Result<Aux> {
    use ModelKind::*;
    let per_side = |x: f64| [DMatrix::from_element(shape[0], k, x), DMatrix::from_element(shape[1], k, x)];
    Ok(match kind {
        Ggga | Geea => Aux::Ard { lambda: DVector::from_element(k, hp.alpha0 / hp.beta0) },
        Gggw => {
            // the inverse-Wishart mean is undefined at the default nu0 = K,
            // so start from the inverse of the mean precision nu0 W0^{-1}
            let cov = &hp.w0 / hp.nu0;
            let r = row_gaussian(hp.mu0.clone(), cov)?;
            Aux::Wishart { rows: [r.clone(), r] }
        }
        Gll => Aux::Laplace { var: per_side(2.0 / hp.eta), eta: None },
        Glli => Aux::Laplace { var: per_side(2.0 / hp.mu_ig), eta: Some(per_side(hp.mu_ig)) },
        Gttn => Aux::TruncNormal { mu: per_side(hp.mu_mu), tau: per_side(hp.a_tn / hp.b_tn) },
        Pgg => Aux::Poisson { z: vec![0; n_obs * k], h: None },
        Pggg => Aux::Poisson {
            z: vec![0; n_obs * k],
            h: Some([DVector::from_element(shape[0], hp.b_prime), DVector::from_element(shape[1], hp.b_prime)]),
        },
        _ => Aux::None,
    })
}

/// Check model/data compatibility: shape rules, integer counts for the
/// Poisson models and nonnegative data for NMF.
pub fn check_compatible(spec: &ModelSpec, data: &ObservedMatrix) -> Result<()> {
    spec.validate_for(data.rows(), data.cols())?;
    if spec.kind.is_poisson() {
        data.check_counts()?;
    }
    if spec.kind == ModelKind::Nmf {
        data.check_nonnegative()?;
    }
    Ok(())
}

/// Starting state for a fit: hierarchical variables at their prior means,
/// then factors drawn from their priors. The volume prior is improper, so
/// GVG/GVnG start from the Gaussian (half-normal) prior with precision lambda.
pub fn initial_state(spec: &ModelSpec, data: &ObservedMatrix, rng: &RngHandle) -> Result<FactorState> {
    check_compatible(spec, data)?;
    let hp = spec.resolve()?;
    let k = spec.k;
    let (rows, cols) = data.shape();
    if spec.kind == ModelKind::Nmf {
        let mean = data.entries().iter().map(|e| e.2).sum::<f64>() / data.n_observed() as f64;
        let scale = (4.0 * mean.max(1e-6) / k as f64).sqrt();
        let draw = |n: usize, r: &mut RngHandle| DMatrix::from_fn(n, k, |_, _| scale * (1.0 - r.random::<f64>()));
        let u = draw(rows, &mut rng.derive(U_STREAM));
        let v = draw(cols, &mut rng.derive(V_STREAM));
        return Ok(FactorState { u, v, tau: 1.0, aux: Aux::None, diagnostics: Diagnostics::default() });
    }
    let aux = aux_at_prior_mean(spec.kind, &hp, [rows, cols], k, data.n_observed())?;
    let u = draw_factor(spec.kind, &hp, &aux, Side::U, rows, k, &mut rng.derive(U_STREAM))?;
    let v = draw_factor(spec.kind, &hp, &aux, Side::V, cols, k, &mut rng.derive(V_STREAM))?;
    let tau = if spec.kind.is_gaussian_likelihood() { hp.alpha_tau / hp.beta_tau } else { 1.0 };
    let mut state = FactorState { u, v, tau, aux, diagnostics: Diagnostics::default() };
    if spec.kind.is_poisson() {
        update_counts(&mut state, data, &rng.derive(COUNT_STREAM), false)?;
    }
    Ok(state)
}

/// Draw every variable from the prior. Latent Poisson counts are left
/// empty (they are defined only together with data).
pub fn forward_sample(spec: &ModelSpec, rows: usize, cols: usize, rng: &RngHandle) -> Result<FactorState> {
    use ModelKind::*;
    spec.validate_for(rows, cols)?;
    let kind = spec.kind;
    if matches!(kind, Gvg | Gvng | Gttn | Nmf) {
        return Err(Error::InvalidParameter(format!("{kind} has no prior that can be sampled directly")));
    }
    let hp = spec.resolve()?;
    let k = spec.k;
    let mut hr = rng.derive(HYPER_STREAM);
    let mut per_side = |n: usize, f: &mut dyn FnMut(&mut RngHandle) -> Result<f64>| -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(n, k);
        for x in m.iter_mut() {
            *x = f(&mut hr)?;
        }
        Ok(m)
    };
    let aux = match kind {
        Ggga | Geea => {
            let mut r = rng.derive(HYPER_STREAM);
            let v: Vec<f64> = (0..k).map(|_| samplers::gamma(hp.alpha0, hp.beta0, &mut r)).collect::<Result<_>>()?;
            Aux::Ard { lambda: DVector::from_vec(v) }
        }
        Gggw => {
            let p = NiwParams { mean: hp.mu0.clone(), kappa: hp.beta0_niw, dof: hp.nu0, scale: hp.w0.clone() };
            let mut r = rng.derive(HYPER_STREAM);
            let mut draw = || -> Result<RowGaussian> {
                let d = samplers::normal_inverse_wishart(&p, &mut r)?;
                Ok(RowGaussian { mean: d.mean, covariance: d.covariance, precision: d.precision })
            };
            Aux::Wishart { rows: [draw()?, draw()?] }
        }
        Gll => {
            let rate = hp.eta / 2.0;
            let var = [
                per_side(rows, &mut |r| samplers::exponential(rate, r))?,
                per_side(cols, &mut |r| samplers::exponential(rate, r))?,
            ];
            Aux::Laplace { var, eta: None }
        }
        Glli => {
            let eta = [
                per_side(rows, &mut |r| samplers::inverse_gaussian(hp.mu_ig, hp.lambda_ig, r))?,
                per_side(cols, &mut |r| samplers::inverse_gaussian(hp.mu_ig, hp.lambda_ig, r))?,
            ];
            let mut r = rng.derive_path(&[HYPER_STREAM, 1]);
            let mut var = eta.clone();
            for (vs, es) in var.iter_mut().zip(&eta) {
                for (x, e) in vs.iter_mut().zip(es.iter()) {
                    *x = samplers::exponential(e / 2.0, &mut r)?;
                }
            }
            Aux::Laplace { var, eta: Some(eta) }
        }
        Pgg => Aux::Poisson { z: Vec::new(), h: None },
        Pggg => {
            let rate = hp.a_prime / hp.b_prime;
            let mut r = rng.derive(HYPER_STREAM);
            let mut vec = |n: usize| -> Result<DVector<f64>> {
                let v: Vec<f64> = (0..n).map(|_| samplers::gamma(hp.a_prime, rate, &mut r)).collect::<Result<_>>()?;
                Ok(DVector::from_vec(v))
            };
            Aux::Poisson { z: Vec::new(), h: Some([vec(rows)?, vec(cols)?]) }
        }
        _ => Aux::None,
    };
    let u = draw_factor(kind, &hp, &aux, Side::U, rows, k, &mut rng.derive(side_stream(Side::U)))?;
    let v = draw_factor(kind, &hp, &aux, Side::V, cols, k, &mut rng.derive(side_stream(Side::V)))?;
    let tau = if kind.is_gaussian_likelihood() {
        samplers::gamma(hp.alpha_tau, hp.beta_tau, &mut rng.derive(TAU_STREAM))?
    } else {
        1.0
    };
    Ok(FactorState { u, v, tau, aux, diagnostics: Diagnostics::default() })
}

/// New observed values on the mask of `template`, drawn from the likelihood
/// given `state`.
pub fn generate_data(kind: ModelKind, state: &FactorState, template: &ObservedMatrix, rng: &mut RngHandle) -> Result<ObservedMatrix> {
    let values: Vec<f64> = template
        .entries()
        .iter()
        .map(|&(i, j, _)| {
            let m = state.predict_entry(i, j);
            if kind.is_poisson() {
                samplers::poisson(m, rng)
            } else {
                samplers::gaussian(m, state.tau, rng)
            }
        })
        .collect::<Result<_>>()?;
    template.with_entry_values(&values)
}
