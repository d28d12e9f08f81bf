//! Factor-matrix conditionals for the Gaussian-likelihood models.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::hyper::Resolved;
use super::kind::{Side, SidePrior};
use super::state::{Aux, FactorState};
use crate::data::{ObservedMatrix, Obs};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_jittered, det_adjugate_psd, sample_with_precision_factor};
use crate::rng::RngHandle;
use crate::samplers;

/// Below this much work per side (|Ω| K) lines are processed serially.
const PARALLEL_WORK: usize = 1 << 14;

pub(crate) fn lines(data: &ObservedMatrix, side: Side) -> &[Vec<Obs>] {
    match side {
        Side::U => data.by_row(),
        Side::V => data.by_col(),
    }
}

/// Run `f` over `0..n`, in parallel when asked. Each call must only depend
/// on its index, so both modes give identical results.
pub(crate) fn map_lines<T, F>(n: usize, parallel: bool, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

pub(crate) fn use_parallel(parallel: bool, data: &ObservedMatrix, k: usize) -> bool {
    parallel && data.n_observed() * k >= PARALLEL_WORK
}

/// Squared error of U V^T over Ω.
pub fn sse(state: &FactorState, data: &ObservedMatrix) -> f64 {
    data.entries()
        .iter()
        .map(|&(i, j, r)| {
            let e = r - state.predict_entry(i, j);
            e * e
        })
        .sum()
}

/// Gamma(shape, rate) conditional of the noise precision.
pub fn noise_posterior(hp: &Resolved, state: &FactorState, data: &ObservedMatrix) -> (f64, f64) {
    (
        hp.alpha_tau + data.n_observed() as f64 / 2.0,
        hp.beta_tau + sse(state, data) / 2.0,
    )
}

pub fn update_noise(hp: &Resolved, state: &mut FactorState, data: &ObservedMatrix, rng: &mut RngHandle) -> Result<()> {
    let (shape, rate) = noise_posterior(hp, state, data);
    state.tau = samplers::gamma(shape, rate, rng)?;
    Ok(())
}

/// Draw from the density proportional to `exp(-prec/2 x^2 + lin x)`,
/// restricted to `x >= 0` when `truncated`.
pub(crate) fn draw_entry(prec: f64, lin: f64, truncated: bool, rng: &mut RngHandle) -> Result<f64> {
    if prec > 0.0 && prec.is_finite() {
        let mean = lin / prec;
        if truncated {
            samplers::truncated_normal(mean, prec, rng)
        } else {
            samplers::gaussian(mean, prec, rng)
        }
    } else if truncated && prec == 0.0 && lin < 0.0 {
        // no likelihood information: the exponential prior itself
        samplers::exponential(-lin, rng)
    } else {
        Err(Error::InvalidParameter(format!(
            "improper entry conditional (precision {prec}, linear term {lin})"
        )))
    }
}

/// Prior precision matrix and linear term for one line of a multivariate side.
struct MultiPrior {
    shared: Option<(DMatrix<f64>, DVector<f64>)>,
}

fn multivariate_prior(prior: SidePrior, hp: &Resolved, state: &FactorState, side: Side, k: usize) -> Result<MultiPrior> {
    let shared = match (prior, &state.aux) {
        (SidePrior::Gaussian, _) => Some((DMatrix::identity(k, k) * hp.lambda, DVector::zeros(k))),
        (SidePrior::Ard, Aux::Ard { lambda }) => Some((DMatrix::from_diagonal(lambda), DVector::zeros(k))),
        (SidePrior::Wishart, Aux::Wishart { rows }) => {
            let r = &rows[side.index()];
            Some((r.precision.clone(), &r.precision * &r.mean))
        }
        (SidePrior::Laplace, Aux::Laplace { .. }) => None,
        _ => return Err(Error::InvalidParameter(format!("auxiliary state does not match {prior:?} prior"))),
    };
    Ok(MultiPrior { shared })
}

/// Row-wise multivariate Gaussian update (GGG, GGGA, GGGW, GLL, GLLI and
/// the Gaussian side of GEG/GVG/GVnG).
pub(crate) fn update_multivariate(
    prior: SidePrior,
    hp: &Resolved,
    state: &mut FactorState,
    data: &ObservedMatrix,
    side: Side,
    rng: &RngHandle,
    parallel: bool,
) -> Result<()> {
    let k = state.k();
    let mp = multivariate_prior(prior, hp, state, side, k)?;
    let laplace_var = match &state.aux {
        Aux::Laplace { var, .. } => Some(&var[side.index()]),
        _ => None,
    };
    let other = match side {
        Side::U => &state.v,
        Side::V => &state.u,
    };
    let tau = state.tau;
    // columns of other^T are contiguous, which makes the per-line gather cheap
    let other_t = other.transpose();
    let lines = lines(data, side);
    let par = use_parallel(parallel, data, k);
    let rows = map_lines(lines.len(), par, |n| {
        let obs = &lines[n];
        let (mut q, mut lin) = match (&mp.shared, laplace_var) {
            (Some((p, m)), _) => (p.clone(), m.clone()),
            (None, Some(var)) => (
                DMatrix::from_diagonal(&DVector::from_fn(k, |c, _| 1.0 / var[(n, c)])),
                DVector::zeros(k),
            ),
            (None, None) => unreachable!("checked by multivariate_prior"),
        };
        if !obs.is_empty() {
            // X^T is built directly so the Gram goes through the blocked gemm
            let mut xt = DMatrix::zeros(k, obs.len());
            for (t, o) in obs.iter().enumerate() {
                xt.set_column(t, &other_t.column(o.other));
            }
            let r = DVector::from_iterator(obs.len(), obs.iter().map(|o| o.value));
            q.gemm(tau, &xt, &xt.transpose(), 1.0);
            lin.gemv(tau, &xt, &r, 1.0);
        }
        let chol = cholesky_jittered(&q)?;
        let mean = chol.solve(&lin);
        let mut line_rng = rng.derive(n as u64);
        let z = DVector::from_fn(k, |_, _| samplers::standard_normal(&mut line_rng));
        Ok(sample_with_precision_factor(&chol, &mean, z))
    })?;
    let f = state.factor_mut(side);
    for (n, row) in rows.into_iter().enumerate() {
        f.set_row(n, &row.transpose());
    }
    Ok(())
}

/// Entry-wise update for the univariate kinds. Entries of one line are
/// updated in order k = 0..K against a running residual; lines are
/// conditionally independent so they may run in parallel.
pub(crate) fn update_univariate(
    prior: SidePrior,
    hp: &Resolved,
    state: &mut FactorState,
    data: &ObservedMatrix,
    side: Side,
    rng: &RngHandle,
    parallel: bool,
) -> Result<()> {
    let k = state.k();
    let s = side.index();
    let (f, other) = match side {
        Side::U => (&state.u, &state.v),
        Side::V => (&state.v, &state.u),
    };
    let tau = state.tau;
    let aux = &state.aux;
    let lines = lines(data, side);
    let par = use_parallel(parallel, data, k);
    let rows = map_lines(lines.len(), par, |n| {
        let obs = &lines[n];
        let mut row: Vec<f64> = (0..k).map(|c| f[(n, c)]).collect();
        let mut resid: Vec<f64> = obs
            .iter()
            .map(|o| o.value - (0..k).map(|c| row[c] * other[(o.other, c)]).sum::<f64>())
            .collect();
        let mut line_rng = rng.derive(n as u64);
        for c in 0..k {
            let mut ss = 0.0;
            let mut st = 0.0;
            for (o, r) in obs.iter().zip(&resid) {
                let w = other[(o.other, c)];
                ss += w * w;
                st += (r + row[c] * w) * w;
            }
            let (pp, pl, trunc) = match (prior, aux) {
                (SidePrior::GaussianUni, _) => (hp.lambda, 0.0, false),
                (SidePrior::Exponential, _) => (0.0, -hp.lambda, true),
                (SidePrior::ExponentialArd, Aux::Ard { lambda }) => (0.0, -lambda[c], true),
                (SidePrior::TruncNormal, _) => {
                    let (mu, t) = hp.tn[s];
                    (t, mu * t, true)
                }
                (SidePrior::TruncNormalHier, Aux::TruncNormal { mu, tau: t }) => {
                    let t = t[s][(n, c)];
                    (t, mu[s][(n, c)] * t, true)
                }
                (SidePrior::L21, _) => {
                    let others: f64 = (0..k).filter(|&c2| c2 != c).map(|c2| row[c2]).sum();
                    (hp.lambda, -hp.lambda * others, true)
                }
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "auxiliary state does not match {prior:?} prior"
                    )))
                }
            };
            let new = draw_entry(pp + tau * ss, pl + tau * st, trunc, &mut line_rng)?;
            let delta = new - row[c];
            if delta != 0.0 {
                for (o, r) in obs.iter().zip(resid.iter_mut()) {
                    *r -= delta * other[(o.other, c)];
                }
            }
            row[c] = new;
        }
        Ok(row)
    })?;
    let f = state.factor_mut(side);
    for (n, row) in rows.into_iter().enumerate() {
        for (c, x) in row.into_iter().enumerate() {
            f[(n, c)] = x;
        }
    }
    Ok(())
}

/// Prior precision and linear term of U_ik under
/// `p(U) ∝ exp(-gamma/2 det(U^T U))`, everything else fixed.
///
/// With X the columns other than k, `D = det(X^T X)` and `A = adj(X^T X)`,
/// the determinant is quadratic in U_ik with coefficient `D - x A x^T`
/// (x the rest of row i) and linear coefficient `-2 x A y`, where
/// `y = sum_{i' != i} U_{i'k} x_{i'}`.
pub fn volume_prior_terms(gamma: f64, gram: &DMatrix<f64>, u: &DMatrix<f64>, i: usize, k: usize) -> (f64, f64) {
    let kk = u.ncols();
    if gamma == 0.0 {
        return (0.0, 0.0);
    }
    let idx: Vec<usize> = (0..kk).filter(|&c| c != k).collect();
    if idx.is_empty() {
        return (gamma, 0.0);
    }
    let sub = gram.select_rows(&idx).select_columns(&idx);
    let x = DVector::from_iterator(idx.len(), idx.iter().map(|&c| u[(i, c)]));
    let y = DVector::from_iterator(idx.len(), idx.iter().map(|&c| gram[(c, k)])) - &x * u[(i, k)];
    if let Some(chol) = sub.clone().cholesky() {
        // gamma D (1 - x G^{-1} x) and gamma D x G^{-1} y, with gamma D formed in
        // log space so a large Gram determinant cannot overflow on its own
        let l = chol.l_dirty();
        let log_det: f64 = (0..idx.len()).map(|c| 2.0 * l[(c, c)].ln()).sum();
        let scale = (gamma.ln() + log_det).exp();
        let gx = chol.solve(&x);
        let quad = 1.0 - x.dot(&gx);
        return (scale * quad, scale * gx.dot(&y));
    }
    let (d, adj) = det_adjugate_psd(&sub);
    let ax = &adj * &x;
    (gamma * (d - x.dot(&ax)), gamma * ax.dot(&y))
}

/// Volume-prior update of U (GVG, GVnG): row-major over (i, k), keeping
/// the Gram matrix U^T U current after every entry.
pub(crate) fn update_volume(
    hp: &Resolved,
    state: &mut FactorState,
    data: &ObservedMatrix,
    nonnegative: bool,
    rng: &RngHandle,
) -> Result<()> {
    let k = state.k();
    let tau = state.tau;
    let mut gram = state.u.transpose() * &state.u;
    let mut fallbacks = 0u64;
    for (i, obs) in data.by_row().iter().enumerate() {
        let mut line_rng = rng.derive(i as u64);
        let mut resid: Vec<f64> = obs
            .iter()
            .map(|o| o.value - state.u.row(i).dot(&state.v.row(o.other)))
            .collect();
        for c in 0..k {
            let old = state.u[(i, c)];
            let mut ss = 0.0;
            let mut st = 0.0;
            for (o, r) in obs.iter().zip(&resid) {
                let w = state.v[(o.other, c)];
                ss += w * w;
                st += (r + old * w) * w;
            }
            let (pp, pl) = volume_prior_terms(hp.gamma, &gram, &state.u, i, c);
            let prec = pp + tau * ss;
            let lin = pl + tau * st;
            let new = if prec > 0.0 && prec.is_finite() && lin.is_finite() {
                draw_entry(prec, lin, nonnegative, &mut line_rng)?
            } else {
                fallbacks += 1;
                if ss > 0.0 {
                    draw_entry(tau * ss, tau * st, nonnegative, &mut line_rng)?
                } else {
                    old
                }
            };
            let delta = new - old;
            if delta != 0.0 {
                for (o, r) in obs.iter().zip(resid.iter_mut()) {
                    *r -= delta * state.v[(o.other, c)];
                }
                for l in 0..k {
                    if l != c {
                        let g = gram[(l, c)] + state.u[(i, l)] * delta;
                        gram[(l, c)] = g;
                        gram[(c, l)] = g;
                    }
                }
                gram[(c, c)] += new * new - old * old;
                state.u[(i, c)] = new;
            }
        }
    }
    state.diagnostics.volume_fallbacks += fallbacks;
    Ok(())
}
