//! Multiplicative-update NMF restricted to the observed entries.

use nalgebra::DMatrix;

use super::kind::Side;
use super::state::FactorState;
use super::updates::lines;
use crate::data::ObservedMatrix;

/// Floor on multiplicative-update denominators.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

fn update_factor(f: &mut DMatrix<f64>, other: &DMatrix<f64>, data: &ObservedMatrix, side: Side) {
    let k = f.ncols();
    let mut num = vec![0.0; k];
    let mut den = vec![0.0; k];
    for (n, obs) in lines(data, side).iter().enumerate() {
        num.fill(0.0);
        den.fill(0.0);
        for o in obs {
            let pred: f64 = (0..k).map(|c| f[(n, c)] * other[(o.other, c)]).sum();
            for c in 0..k {
                let w = other[(o.other, c)];
                num[c] += o.value * w;
                den[c] += pred * w;
            }
        }
        for c in 0..k {
            f[(n, c)] *= num[c] / den[c].max(DENOMINATOR_FLOOR);
        }
    }
}

/// One sweep: U then V. Needs nonnegative data and factors.
pub fn nmf_step(u: &mut DMatrix<f64>, v: &mut DMatrix<f64>, data: &ObservedMatrix) {
    update_factor(u, v, data, Side::U);
    update_factor(v, u, data, Side::V);
}

pub(crate) fn update_side(state: &mut FactorState, data: &ObservedMatrix, side: Side) {
    match side {
        Side::U => update_factor(&mut state.u, &state.v, data, side),
        Side::V => update_factor(&mut state.v, &state.u, data, side),
    }
}
