use super::hierarchy::{update_ard, update_gttn_hyper, update_laplace, update_wishart};
use super::hyper::{ModelSpec, Resolved};
use super::kind::{ModelKind, Side, SidePrior};
use super::nmf;
use super::poisson::{update_counts, update_factor, update_rates};
use super::state::FactorState;
use super::updates::{update_multivariate, update_noise, update_univariate, update_volume};
use crate::data::ObservedMatrix;
use crate::error::Result;
use crate::rng::RngHandle;

// stream labels within one sweep
const NOISE: u64 = 1;
const LAPLACE: u64 = 2;
const ARD: u64 = 3;
const WISHART: u64 = 4;
const GTTN: u64 = 5;
const FACTOR_U: u64 = 6;
const FACTOR_V: u64 = 7;
const COUNTS: u64 = 8;
const RATES_U: u64 = 9;
const RATES_V: u64 = 10;

pub(crate) fn update_side_resolved(
    kind: ModelKind,
    hp: &Resolved,
    state: &mut FactorState,
    data: &ObservedMatrix,
    side: Side,
    rng: &RngHandle,
    parallel: bool,
) -> Result<()> {
    let prior = kind.prior(side);
    match prior {
        SidePrior::Gaussian | SidePrior::Ard | SidePrior::Wishart | SidePrior::Laplace => {
            update_multivariate(prior, hp, state, data, side, rng, parallel)
        }
        SidePrior::GaussianUni
        | SidePrior::Exponential
        | SidePrior::ExponentialArd
        | SidePrior::TruncNormal
        | SidePrior::TruncNormalHier
        | SidePrior::L21 => update_univariate(prior, hp, state, data, side, rng, parallel),
        SidePrior::Volume { nonnegative } => update_volume(hp, state, data, nonnegative, rng),
        SidePrior::Gamma | SidePrior::GammaHier => update_factor(hp, state, data, side, rng, parallel),
        SidePrior::Nmf => {
            nmf::update_side(state, data, side);
            Ok(())
        }
    }
}

/// Redraw one factor matrix from its conditional given everything else.
/// Hierarchical variables, noise and latent counts are left untouched.
pub fn update_side(spec: &ModelSpec, state: &mut FactorState, data: &ObservedMatrix, side: Side, rng: &RngHandle) -> Result<()> {
    let hp = spec.resolve()?;
    update_side_resolved(spec.kind, &hp, state, data, side, rng, false)
}

/// One full sweep in the fixed order: noise, hierarchical variables, U, V
/// for Gaussian models; Z, U, h^U, V, h^V for Poisson models; a
/// multiplicative update for NMF. All randomness comes from streams derived
/// from `rng`, so the result does not depend on `parallel`.
pub fn gibbs_sweep(spec: &ModelSpec, state: &mut FactorState, data: &ObservedMatrix, rng: &RngHandle, parallel: bool) -> Result<()> {
    sweep(spec, state, data, rng, parallel, false)
}

/// `gibbs_sweep`, optionally leaving tau where it is.
pub(crate) fn sweep(
    spec: &ModelSpec,
    state: &mut FactorState,
    data: &ObservedMatrix,
    rng: &RngHandle,
    parallel: bool,
    hold_noise: bool,
) -> Result<()> {
    let hp = spec.resolve()?;
    let kind = spec.kind;
    if kind == ModelKind::Nmf {
        nmf::nmf_step(&mut state.u, &mut state.v, data);
        return Ok(());
    }
    if kind.is_poisson() {
        update_counts(state, data, &rng.derive(COUNTS), parallel)?;
        update_factor(&hp, state, data, Side::U, &rng.derive(FACTOR_U), parallel)?;
        if kind == ModelKind::Pggg {
            update_rates(&hp, state, Side::U, &mut rng.derive(RATES_U))?;
        }
        update_factor(&hp, state, data, Side::V, &rng.derive(FACTOR_V), parallel)?;
        if kind == ModelKind::Pggg {
            update_rates(&hp, state, Side::V, &mut rng.derive(RATES_V))?;
        }
        return Ok(());
    }
    if !hold_noise {
        update_noise(&hp, state, data, &mut rng.derive(NOISE))?;
    }
    match kind {
        ModelKind::Gll | ModelKind::Glli => update_laplace(&hp, state, &mut rng.derive(LAPLACE))?,
        ModelKind::Ggga | ModelKind::Geea => update_ard(kind, &hp, state, &mut rng.derive(ARD))?,
        ModelKind::Gggw => update_wishart(&hp, state, &mut rng.derive(WISHART))?,
        ModelKind::Gttn => update_gttn_hyper(&hp, state, &mut rng.derive(GTTN))?,
        _ => {}
    }
    update_side_resolved(kind, &hp, state, data, Side::U, &rng.derive(FACTOR_U), parallel)?;
    update_side_resolved(kind, &hp, state, data, Side::V, &rng.derive(FACTOR_V), parallel)?;
    Ok(())
}
