//! Running chains: burn-in, thinning, posterior-mean prediction and traces.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::ObservedMatrix;
use crate::error::{Error, Result};
use crate::models::{check_compatible, initial_state, sweep, sse, Diagnostics, FactorState, ModelKind, ModelSpec};
use crate::rng::RngHandle;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
    /// Update conditionally independent rows in parallel.
    pub parallel_rows: bool,
    /// Gaussian kinds keep the noise precision at its initial value for this
    /// many opening sweeps, capped at half of `burn_in`. Redrawn from a
    /// prior-initialised state, tau collapses to about 1/SSE on data with a
    /// large mean and the factors then shrink to zero; sweeps at the prior
    /// mean let U and V reach the data first. 0 disables.
    pub noise_warmup: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { n_iterations: 1000, burn_in: 500, thinning: 2, seed: 0, parallel_rows: true, noise_warmup: 250 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iterations == 0 {
            return Err(Error::InvalidParameter("n_iterations must be >= 1".into()));
        }
        if self.burn_in >= self.n_iterations {
            return Err(Error::InvalidParameter(format!(
                "burn_in ({}) must be below n_iterations ({})",
                self.burn_in, self.n_iterations
            )));
        }
        if self.thinning == 0 {
            return Err(Error::InvalidParameter("thinning must be >= 1".into()));
        }
        if self.retained_count() == 0 {
            return Err(Error::InvalidParameter(format!(
                "no draws retained: (n_iterations - burn_in) = {} is below thinning = {}",
                self.n_iterations - self.burn_in,
                self.thinning
            )));
        }
        Ok(())
    }

    /// Opening sweeps that hold the noise precision fixed.
    pub fn warmup_sweeps(&self) -> usize {
        self.noise_warmup.min(self.burn_in / 2)
    }

    /// Iteration `t` (0-based) is kept if it is past burn-in and lands on
    /// the thinning grid.
    pub fn is_retained(&self, t: usize) -> bool {
        t >= self.burn_in && (t - self.burn_in + 1) % self.thinning == 0
    }

    pub fn retained_count(&self) -> usize {
        (self.n_iterations - self.burn_in.min(self.n_iterations)) / self.thinning.max(1)
    }
}

#[derive(Debug, Clone)]
pub struct SamplerTrace {
    /// Training MSE of the current state after each sweep.
    pub training_mse: Vec<f64>,
    /// Cumulative wall-clock seconds after each sweep.
    pub wall_seconds: Vec<f64>,
    pub retained: usize,
    /// Sum of U V^T over retained draws.
    pub prediction_sum: DMatrix<f64>,
    pub diagnostics: Diagnostics,
}

/// Posterior-mean predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    mean: DMatrix<f64>,
}

impl Predictor {
    pub fn from_mean(mean: DMatrix<f64>) -> Self {
        Predictor { mean }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mean
    }

    pub fn predict(&self, indices: &[(usize, usize)]) -> Result<Vec<f64>> {
        let (rows, cols) = self.mean.shape();
        indices
            .iter()
            .map(|&(i, j)| {
                if i < rows && j < cols {
                    Ok(self.mean[(i, j)])
                } else {
                    Err(Error::OutOfRange { row: i, col: j, rows, cols })
                }
            })
            .collect()
    }
}

/// Everything a fit produces.
#[derive(Debug, Clone)]
pub struct Fit {
    pub trace: SamplerTrace,
    pub predictor: Predictor,
    pub state: FactorState,
}

pub fn training_mse(state: &FactorState, data: &ObservedMatrix) -> f64 {
    sse(state, data) / data.n_observed() as f64
}

/// Run the sampler and return the trace and the posterior-mean predictor.
pub fn fit(spec: &ModelSpec, data: &ObservedMatrix, cfg: &SamplerConfig) -> Result<(SamplerTrace, Predictor)> {
    let f = fit_full(spec, data, cfg, None)?;
    Ok((f.trace, f.predictor))
}

/// `fit` with access to the final state and an optional per-sweep callback
/// receiving (iteration, training MSE).
pub fn fit_full(
    spec: &ModelSpec,
    data: &ObservedMatrix,
    cfg: &SamplerConfig,
    mut progress: Option<&mut dyn FnMut(usize, f64)>,
) -> Result<Fit> {
    cfg.validate()?;
    check_compatible(spec, data)?;
    let root = RngHandle::new(cfg.seed);
    let mut state = initial_state(spec, data, &root.derive(0))?;
    let (rows, cols) = data.shape();
    let mut trace = SamplerTrace {
        training_mse: Vec::with_capacity(cfg.n_iterations),
        wall_seconds: Vec::with_capacity(cfg.n_iterations),
        retained: 0,
        prediction_sum: DMatrix::zeros(rows, cols),
        diagnostics: Diagnostics::default(),
    };
    let start = Instant::now();
    for t in 0..cfg.n_iterations {
        let hold_noise = t < cfg.warmup_sweeps();
        sweep(spec, &mut state, data, &root.derive(t as u64 + 1), cfg.parallel_rows, hold_noise)?;
        let mse = training_mse(&state, data);
        if !mse.is_finite() {
            return Err(Error::Decomposition(format!("{} diverged at iteration {t}", spec.kind)));
        }
        trace.training_mse.push(mse);
        trace.wall_seconds.push(start.elapsed().as_secs_f64());
        if spec.kind != ModelKind::Nmf && cfg.is_retained(t) {
            trace.prediction_sum += state.reconstruction();
            trace.retained += 1;
        }
        if let Some(cb) = progress.as_mut() {
            cb(t, mse);
        }
    }
    if spec.kind == ModelKind::Nmf {
        // a point estimate: predict with the final iterate
        trace.prediction_sum = state.reconstruction();
        trace.retained = 1;
    }
    trace.diagnostics = state.diagnostics.clone();
    let predictor = Predictor::from_mean(&trace.prediction_sum / trace.retained as f64);
    Ok(Fit { trace, predictor, state })
}

pub fn mse(predictions: &[f64], truth: &[f64]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::InvalidShape(format!(
            "{} predictions for {} true values",
            predictions.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::EmptyInput("no values to score".into()));
    }
    Ok(predictions.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / truth.len() as f64)
}

/// Var(truth) / MSE. A perfect prediction gives +∞.
pub fn variance_ratio(truth: &[f64], predictions: &[f64]) -> Result<f64> {
    let err = mse(predictions, truth)?;
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let var = truth.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    Ok(if err == 0.0 { f64::INFINITY } else { var / err })
}

/// Predict each index by the mean of its row in `train` (the global mean
/// for a row without observations).
pub fn row_average_predictions(train: &ObservedMatrix, indices: &[(usize, usize)]) -> Vec<f64> {
    let global = train.entries().iter().map(|e| e.2).sum::<f64>() / train.n_observed() as f64;
    let means: Vec<f64> = train
        .by_row()
        .iter()
        .map(|r| {
            if r.is_empty() {
                global
            } else {
                r.iter().map(|o| o.value).sum::<f64>() / r.len() as f64
            }
        })
        .collect();
    indices.iter().map(|&(i, _)| means[i]).collect()
}

/// Trace as delimited text: `iteration,training_mse,wall_seconds`.
/// Without timings the last column is `NA`, which keeps output
/// byte-reproducible.
pub fn render_trace(trace: &SamplerTrace, timings: bool) -> String {
    let mut out = String::from("iteration,training_mse,wall_seconds\n");
    for (t, (m, w)) in trace.training_mse.iter().zip(&trace.wall_seconds).enumerate() {
        if timings {
            writeln!(out, "{},{m},{w}", t + 1).unwrap();
        } else {
            writeln!(out, "{},{m},NA", t + 1).unwrap();
        }
    }
    out
}
