//! Poisson-likelihood updates via latent per-factor counts.

use super::hyper::Resolved;
use super::kind::Side;
use super::state::{Aux, FactorState};
use super::updates::{lines, map_lines, use_parallel};
use crate::data::ObservedMatrix;
use crate::error::{Error, Result};
use crate::rng::RngHandle;
use crate::samplers;

/// Floor on factor entries when forming allocation probabilities.
pub const FACTOR_FLOOR: f64 = 1e-12;

fn no_counts() -> Error {
    Error::InvalidParameter("state has no latent counts".into())
}

/// Redraw Z_ij ~ Multinomial(R_ij, p) with p_k ∝ U_ik V_jk for every
/// observed entry.
pub fn update_counts(state: &mut FactorState, data: &ObservedMatrix, rng: &RngHandle, parallel: bool) -> Result<()> {
    let k = state.k();
    let (u, v) = (&state.u, &state.v);
    let rows = data.by_row();
    let par = use_parallel(parallel, data, k);
    let blocks = map_lines(rows.len(), par, |i| {
        let mut line_rng = rng.derive(i as u64);
        let mut out = Vec::with_capacity(rows[i].len() * k);
        let mut w = vec![0.0; k];
        for o in &rows[i] {
            for (c, wc) in w.iter_mut().enumerate() {
                *wc = u[(i, c)].max(FACTOR_FLOOR) * v[(o.other, c)].max(FACTOR_FLOOR);
            }
            let n = o.value.round() as u64;
            out.extend(samplers::multinomial_weights(n, &w, &mut line_rng).into_iter().map(|x| x as u32));
        }
        Ok(out)
    })?;
    let Aux::Poisson { z, .. } = &mut state.aux else {
        return Err(no_counts());
    };
    // entries are numbered row-major, so row blocks concatenate in order
    z.clear();
    for b in blocks {
        z.extend(b);
    }
    Ok(())
}

/// Gamma(shape, rate) conditional of one factor entry: shape
/// `a + sum_{o in line} Z_ok`, rate `rate_n + sum_{o in line} W_ok`.
pub fn gamma_entry_posterior(a: f64, rate_n: f64, z_sum: f64, w_sum: f64) -> (f64, f64) {
    (a + z_sum, rate_n + w_sum)
}

/// Redraw every entry of one factor matrix from its Gamma conditional.
pub fn update_factor(
    hp: &Resolved,
    state: &mut FactorState,
    data: &ObservedMatrix,
    side: Side,
    rng: &RngHandle,
    parallel: bool,
) -> Result<()> {
    let k = state.k();
    let Aux::Poisson { z, h } = &state.aux else {
        return Err(no_counts());
    };
    let other = match side {
        Side::U => &state.v,
        Side::V => &state.u,
    };
    let lines = lines(data, side);
    let par = use_parallel(parallel, data, k);
    let rows = map_lines(lines.len(), par, |n| {
        let rate_n = h.as_ref().map_or(hp.b, |h| h[side.index()][n]);
        let mut line_rng = rng.derive(n as u64);
        (0..k)
            .map(|c| {
                let mut zs = 0.0;
                let mut ws = 0.0;
                for o in &lines[n] {
                    zs += z[o.entry * k + c] as f64;
                    ws += other[(o.other, c)];
                }
                let (shape, rate) = gamma_entry_posterior(hp.a, rate_n, zs, ws);
                samplers::gamma(shape, rate, &mut line_rng)
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let f = state.factor_mut(side);
    for (n, row) in rows.into_iter().enumerate() {
        for (c, x) in row.into_iter().enumerate() {
            f[(n, c)] = x;
        }
    }
    Ok(())
}

/// Gamma(shape, rate) conditional of h_n given its row of the factor.
pub fn rate_posterior(hp: &Resolved, row_sum: f64, k: usize) -> (f64, f64) {
    (hp.a_prime + k as f64 * hp.a, hp.a_prime / hp.b_prime + row_sum)
}

pub fn update_rates(hp: &Resolved, state: &mut FactorState, side: Side, rng: &mut RngHandle) -> Result<()> {
    let k = state.k();
    let sums: Vec<f64> = state.factor(side).row_iter().map(|r| r.sum()).collect();
    let Aux::Poisson { h: Some(h), .. } = &mut state.aux else {
        return Err(Error::InvalidParameter("state has no hierarchical rates".into()));
    };
    for (n, s) in sums.into_iter().enumerate() {
        let (shape, rate) = rate_posterior(hp, s, k);
        h[side.index()][n] = samplers::gamma(shape, rate, rng)?;
    }
    Ok(())
}

/// Check that the latent counts of every observed entry sum to R_ij.
pub fn check_count_totals(state: &FactorState, data: &ObservedMatrix) -> Result<()> {
    let k = state.k();
    let Aux::Poisson { z, .. } = &state.aux else {
        return Err(no_counts());
    };
    if z.len() != data.n_observed() * k {
        return Err(Error::InvalidShape("latent count array has the wrong size".into()));
    }
    for (e, &(i, j, r)) in data.entries().iter().enumerate() {
        let total: u64 = z[e * k..(e + 1) * k].iter().map(|&x| x as u64).sum();
        if total as f64 != r.round() {
            return Err(Error::InvalidParameter(format!(
                "latent counts at ({i}, {j}) sum to {total}, expected {r}"
            )));
        }
    }
    Ok(())
}
