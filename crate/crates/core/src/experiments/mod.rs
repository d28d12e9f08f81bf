//! Experiment protocols: convergence, (nested) cross-validation, noise,
//! sparsity and model selection.
//!
//! Each protocol expands into a list of independent jobs (model × setting ×
//! repeat/fold) that run in parallel and are collected back in job order, so
//! the result is a pure function of the plan, the data and the seed.

mod report;

pub use report::{render_curves, render_records, render_summary, summarise, SummaryRow, RECORD_HEADER};

use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{add_noise, make_holdout, make_kfold, ObservedMatrix, SplitPlan};
use crate::error::{Error, Result};
use crate::inference::{fit_full, mse, row_average_predictions, variance_ratio, SamplerConfig};
use crate::models::ModelSpec;
use crate::rng::combine_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Convergence,
    #[default]
    CrossValidation,
    NestedCv,
    Noise,
    Sparsity,
    ModelSelection,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Convergence => "convergence",
            Protocol::CrossValidation => "cross_validation",
            Protocol::NestedCv => "nested_cv",
            Protocol::Noise => "noise",
            Protocol::Sparsity => "sparsity",
            Protocol::ModelSelection => "model_selection",
        }
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "convergence" => Ok(Protocol::Convergence),
            "cross_validation" | "cv" => Ok(Protocol::CrossValidation),
            "nested_cv" | "nested" => Ok(Protocol::NestedCv),
            "noise" => Ok(Protocol::Noise),
            "sparsity" => Ok(Protocol::Sparsity),
            "model_selection" => Ok(Protocol::ModelSelection),
            other => Err(Error::Config(format!("unknown protocol {other:?}"))),
        }
    }
}

/// Default K grid for nested cross-validation.
pub const NESTED_K_GRID: [usize; 11] = [1, 2, 3, 4, 5, 6, 8, 10, 13, 16, 20];
/// Default K grid for the model-selection sweep.
pub const SELECTION_K_GRID: [usize; 4] = [2, 5, 10, 20];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub protocol: Protocol,
    /// Model templates. Protocols that sweep K override each template's `k`.
    pub models: Vec<ModelSpec>,
    pub k_grid: Option<Vec<usize>>,
    /// Noise-to-signal ratios (noise protocol; required).
    pub noise_levels: Vec<f64>,
    /// Fractions of observed entries held out (sparsity protocol; required).
    pub fractions: Vec<f64>,
    pub n_repeats: Option<usize>,
    pub n_folds: Option<usize>,
    pub inner_folds: usize,
    /// Test fraction for model selection.
    pub holdout_fraction: f64,
    pub seed: u64,
    pub sampler: SamplerConfig,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            protocol: Protocol::default(),
            models: Vec::new(),
            k_grid: None,
            noise_levels: Vec::new(),
            fractions: Vec::new(),
            n_repeats: None,
            n_folds: None,
            inner_folds: 5,
            holdout_fraction: 0.1,
            seed: 0,
            sampler: SamplerConfig::default(),
        }
    }
}

impl ExperimentPlan {
    pub fn new(protocol: Protocol, models: Vec<ModelSpec>) -> Self {
        ExperimentPlan { protocol, models, ..Default::default() }
    }

    pub fn repeats(&self) -> usize {
        self.n_repeats.unwrap_or(match self.protocol {
            Protocol::Convergence | Protocol::Sparsity | Protocol::ModelSelection => 10,
            _ => 1,
        })
    }

    pub fn folds(&self) -> usize {
        self.n_folds.unwrap_or(match self.protocol {
            Protocol::Noise => 10,
            _ => 5,
        })
    }

    pub fn grid(&self) -> Vec<usize> {
        match &self.k_grid {
            Some(g) => g.clone(),
            None => match self.protocol {
                Protocol::ModelSelection => SELECTION_K_GRID.to_vec(),
                _ => NESTED_K_GRID.to_vec(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.models.is_empty() {
            return cfg("an experiment needs at least one model".into());
        }
        for m in &self.models {
            m.validate()?;
        }
        self.sampler.validate()?;
        if self.repeats() == 0 {
            return cfg("n_repeats must be >= 1".into());
        }
        if self.folds() < 2 {
            return cfg("n_folds must be >= 2".into());
        }
        match self.protocol {
            Protocol::NestedCv | Protocol::ModelSelection => {
                let g = self.grid();
                if g.is_empty() || g.contains(&0) {
                    return cfg(format!("K grid must be non-empty with K >= 1, got {g:?}"));
                }
                if self.protocol == Protocol::NestedCv && self.inner_folds < 2 {
                    return cfg("inner_folds must be >= 2".into());
                }
                if self.protocol == Protocol::ModelSelection && !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0)
                {
                    return cfg(format!("holdout_fraction must be in (0, 1), got {}", self.holdout_fraction));
                }
            }
            Protocol::Noise => {
                if self.noise_levels.is_empty() {
                    return cfg("the noise protocol needs noise_levels".into());
                }
                if let Some(x) = self.noise_levels.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
                    return cfg(format!("noise levels must be finite and >= 0, got {x}"));
                }
            }
            Protocol::Sparsity => {
                if self.fractions.is_empty() {
                    return cfg("the sparsity protocol needs fractions".into());
                }
                if let Some(x) = self.fractions.iter().find(|x| !(**x > 0.0 && **x < 1.0)) {
                    return cfg(format!("held-out fractions must be in (0, 1), got {x}"));
                }
            }
            Protocol::Convergence | Protocol::CrossValidation => {}
        }
        Ok(())
    }
}

/// One (model, setting, repeat, fold) evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub model: String,
    /// Name of the swept setting: `K`, `folds`, `noise` or `fraction`.
    pub setting: &'static str,
    pub value: f64,
    pub repeat: usize,
    pub fold: usize,
    /// Seed of the fit that produced this record.
    pub seed: u64,
    /// K used for the reported fit.
    pub k: usize,
    pub chosen_k: Option<usize>,
    pub n_test: usize,
    pub train_mse: f64,
    pub test_mse: Option<f64>,
    pub variance_ratio: Option<f64>,
    pub rowavg_test_mse: Option<f64>,
    pub rowavg_variance_ratio: Option<f64>,
    pub volume_fallbacks: u64,
    pub wall_seconds: f64,
}

impl Record {
    pub fn setting_label(&self) -> String {
        format!("{}={}", self.setting, self.value)
    }
}

/// Mean training-MSE curve of one model over repeats.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub model: String,
    pub mean_mse: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub protocol: Protocol,
    pub records: Vec<Record>,
    pub curves: Vec<Curve>,
}

// seed labels
const FIT: u64 = 1;
const SPLIT: u64 = 2;
const NOISE: u64 = 3;
const INNER_SPLIT: u64 = 4;
const INNER_FIT: u64 = 5;

/// Display names; repeated kinds get a `#index` suffix.
fn model_labels(models: &[ModelSpec]) -> Vec<String> {
    models
        .iter()
        .enumerate()
        .map(|(n, m)| {
            if models.iter().filter(|o| o.kind == m.kind).count() > 1 {
                format!("{}#{n}", m.kind)
            } else {
                m.kind.name().to_string()
            }
        })
        .collect()
}

/// A training set with its held-out entries.
struct Fold {
    repeat: usize,
    fold: usize,
    setting_idx: usize,
    value: f64,
    train: ObservedMatrix,
    test: Vec<(usize, usize, f64)>,
}

fn folds_of(split: &SplitPlan, data: &ObservedMatrix, repeat: usize, setting_idx: usize, value: f64) -> Result<Vec<Fold>> {
    split
        .test_folds()
        .into_iter()
        .map(|f| {
            let train = split.train(data, f)?;
            let test = split.test(data, f);
            if let Some(e) = test.iter().find(|e| train.is_observed(e.0, e.1)) {
                return Err(Error::InfeasibleSplit(format!("entry ({}, {}) is in both train and test", e.0, e.1)));
            }
            Ok(Fold { repeat, fold: f, setting_idx, value, train, test })
        })
        .collect()
}

struct Evaluation {
    train_mse: f64,
    test_mse: f64,
    volume_fallbacks: u64,
    wall_seconds: f64,
}

fn evaluate(spec: &ModelSpec, fold: &Fold, cfg: &SamplerConfig) -> Result<Evaluation> {
    let start = Instant::now();
    let fit = fit_full(spec, &fold.train, cfg, None)?;
    let idx: Vec<(usize, usize)> = fold.test.iter().map(|e| (e.0, e.1)).collect();
    let truth: Vec<f64> = fold.test.iter().map(|e| e.2).collect();
    let pred = fit.predictor.predict(&idx)?;
    Ok(Evaluation {
        train_mse: *fit.trace.training_mse.last().expect("n_iterations >= 1"),
        test_mse: mse(&pred, &truth)?,
        volume_fallbacks: fit.trace.diagnostics.volume_fallbacks,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

fn ratio_or_none(truth: &[f64], pred: &[f64]) -> Option<f64> {
    variance_ratio(truth, pred).ok()
}

/// Build the record for one evaluated fold, including the row-average baseline.
fn record(
    label: &str,
    setting: &'static str,
    fold: &Fold,
    seed: u64,
    k: usize,
    chosen_k: Option<usize>,
    ev: Evaluation,
) -> Result<Record> {
    let idx: Vec<(usize, usize)> = fold.test.iter().map(|e| (e.0, e.1)).collect();
    let truth: Vec<f64> = fold.test.iter().map(|e| e.2).collect();
    let rowavg = row_average_predictions(&fold.train, &idx);
    let var = {
        let n = truth.len() as f64;
        let m = truth.iter().sum::<f64>() / n;
        truth.iter().map(|t| (t - m).powi(2)).sum::<f64>() / n
    };
    let ratio = if ev.test_mse == 0.0 { f64::INFINITY } else { var / ev.test_mse };
    Ok(Record {
        model: label.to_string(),
        setting,
        value: fold.value,
        repeat: fold.repeat,
        fold: fold.fold,
        seed,
        k,
        chosen_k,
        n_test: truth.len(),
        train_mse: ev.train_mse,
        test_mse: Some(ev.test_mse),
        variance_ratio: Some(ratio),
        rowavg_test_mse: Some(mse(&rowavg, &truth)?),
        rowavg_variance_ratio: ratio_or_none(&truth, &rowavg),
        volume_fallbacks: ev.volume_fallbacks,
        wall_seconds: ev.wall_seconds,
    })
}

fn with_seed(cfg: &SamplerConfig, seed: u64) -> SamplerConfig {
    SamplerConfig { seed, ..cfg.clone() }
}

fn with_k(spec: &ModelSpec, k: usize) -> ModelSpec {
    ModelSpec { k, ..spec.clone() }
}

fn check_protocol(plan: &ExperimentPlan, allowed: &[Protocol]) -> Result<()> {
    if allowed.contains(&plan.protocol) {
        Ok(())
    } else {
        Err(Error::Config(format!("plan protocol is {}, expected one of {allowed:?}", plan.protocol.name())))
    }
}

/// Run whichever protocol the plan names.
pub fn run(plan: &ExperimentPlan, data: &ObservedMatrix) -> Result<ExperimentResult> {
    match plan.protocol {
        Protocol::Convergence => run_convergence(plan, data),
        Protocol::CrossValidation | Protocol::NestedCv => run_cross_validation(plan, data),
        Protocol::Noise => run_noise(plan, data),
        Protocol::Sparsity => run_sparsity(plan, data),
        Protocol::ModelSelection => run_model_selection(plan, data),
    }
}

/// Training-MSE curves at each template's K, averaged over repeats.
pub fn run_convergence(plan: &ExperimentPlan, data: &ObservedMatrix) -> Result<ExperimentResult> {
    check_protocol(plan, &[Protocol::Convergence])?;
    plan.validate()?;
    let labels = model_labels(&plan.models);
    let jobs: Vec<(usize, usize)> =
        (0..plan.models.len()).flat_map(|m| (0..plan.repeats()).map(move |r| (m, r))).collect();
    let runs: Vec<(Record, Vec<f64>)> = jobs
        .par_iter()
        .map(|&(m, r)| {
            let spec = &plan.models[m];
            let seed = combine_seed(plan.seed, &[FIT, m as u64, 0, r as u64]);
            let start = Instant::now();
            let fit = fit_full(spec, data, &with_seed(&plan.sampler, seed), None)?;
            let curve = fit.trace.training_mse;
            let rec = Record {
                model: labels[m].clone(),
                setting: "K",
                value: spec.k as f64,
                repeat: r,
                fold: 0,
                seed,
                k: spec.k,
                chosen_k: None,
                n_test: 0,
                train_mse: *curve.last().expect("n_iterations >= 1"),
                test_mse: None,
                variance_ratio: None,
                rowavg_test_mse: None,
                rowavg_variance_ratio: None,
                volume_fallbacks: fit.trace.diagnostics.volume_fallbacks,
                wall_seconds: start.elapsed().as_secs_f64(),
            };
            Ok((rec, curve))
        })
        .collect::<Result<_>>()?;
    let repeats = plan.repeats();
    let curves = runs
        .chunks(repeats)
        .zip(&labels)
        .map(|(chunk, label)| {
            let n = chunk[0].1.len();
            let mean_mse = (0..n).map(|t| chunk.iter().map(|c| c.1[t]).sum::<f64>() / repeats as f64).collect();
            Curve { model: label.clone(), mean_mse }
        })
        .collect();
    Ok(ExperimentResult { protocol: plan.protocol, records: runs.into_iter().map(|r| r.0).collect(), curves })
}

/// Pick K by mean inner-fold test MSE; ties go to the smallest K.
fn select_k(spec: &ModelSpec, m: usize, plan: &ExperimentPlan, outer: &Fold) -> Result<usize> {
    let inner_seed = combine_seed(plan.seed, &[INNER_SPLIT, outer.repeat as u64, outer.fold as u64]);
    let split = make_kfold(&outer.train, plan.inner_folds, inner_seed)?;
    let inner = folds_of(&split, &outer.train, outer.repeat, 0, 0.0)?;
    let mut grid = plan.grid();
    grid.sort_unstable();
    grid.dedup();
    let mut best: Option<(usize, f64)> = None;
    for (g, &k) in grid.iter().enumerate() {
        let spec_k = with_k(spec, k);
        if spec_k.validate_for(outer.train.rows(), outer.train.cols()).is_err() {
            continue;
        }
        let mut total = 0.0;
        for f in &inner {
            let seed = combine_seed(
                plan.seed,
                &[INNER_FIT, m as u64, outer.repeat as u64, outer.fold as u64, g as u64, f.fold as u64],
            );
            total += evaluate(&spec_k, f, &with_seed(&plan.sampler, seed))?.test_mse;
        }
        let mean = total / inner.len() as f64;
        if best.is_none_or(|(_, b)| mean < b) {
            best = Some((k, mean));
        }
    }
    best.map(|b| b.0)
        .ok_or_else(|| Error::InvalidParameter(format!("no K in {grid:?} is valid for {}", spec.kind)))
}

/// Outer k-fold cross-validation, optionally choosing K per outer fold by
/// an inner k-fold search.
pub fn run_cross_validation(plan: &ExperimentPlan, data: &ObservedMatrix) -> Result<ExperimentResult> {
    check_protocol(plan, &[Protocol::CrossValidation, Protocol::NestedCv])?;
    plan.validate()?;
    let nested = plan.protocol == Protocol::NestedCv;
    let labels = model_labels(&plan.models);
    let mut folds = Vec::new();
    for r in 0..plan.repeats() {
        let split = make_kfold(data, plan.folds(), combine_seed(plan.seed, &[SPLIT, 0, r as u64]))?;
        folds.extend(folds_of(&split, data, r, 0, plan.folds() as f64)?);
    }
    let jobs: Vec<(usize, usize)> = (0..plan.models.len()).flat_map(|m| (0..folds.len()).map(move |f| (m, f))).collect();
    let records = jobs
        .par_iter()
        .map(|&(m, f)| {
            let fold = &folds[f];
            let template = &plan.models[m];
            let (k, chosen) = if nested {
                let k = select_k(template, m, plan, fold)?;
                (k, Some(k))
            } else {
                (template.k, None)
            };
            let spec = with_k(template, k);
            let seed = combine_seed(plan.seed, &[FIT, m as u64, 0, fold.repeat as u64, fold.fold as u64]);
            let ev = evaluate(&spec, fold, &with_seed(&plan.sampler, seed))?;
            record(&labels[m], "folds", fold, seed, k, chosen, ev)
        })
        .collect::<Result<_>>()?;
    Ok(ExperimentResult { protocol: plan.protocol, records, curves: Vec::new() })
}

/// Evaluate every model on every fold.
fn run_folds(
    plan: &ExperimentPlan,
    folds: &[Fold],
    setting: &'static str,
    k_of: impl Fn(usize, &Fold) -> usize + Sync,
) -> Result<Vec<Record>> {
    let labels = model_labels(&plan.models);
    let jobs: Vec<(usize, usize)> = (0..plan.models.len()).flat_map(|m| (0..folds.len()).map(move |f| (m, f))).collect();
    jobs.par_iter()
        .map(|&(m, f)| {
            let fold = &folds[f];
            let k = k_of(m, fold);
            let spec = with_k(&plan.models[m], k);
            let seed = combine_seed(
                plan.seed,
                &[FIT, m as u64, fold.setting_idx as u64, fold.repeat as u64, fold.fold as u64],
            );
            let ev = evaluate(&spec, fold, &with_seed(&plan.sampler, seed))?;
            record(&labels[m], setting, fold, seed, k, None, ev)
        })
        .collect()
}

/// Add noise at each level, then k-fold evaluate on the noisy data.
pub fn run_noise(plan: &ExperimentPlan, data: &ObservedMatrix) -> Result<ExperimentResult> {
    check_protocol(plan, &[Protocol::Noise])?;
    plan.validate()?;
    let mut folds = Vec::new();
    for (l, &level) in plan.noise_levels.iter().enumerate() {
        for r in 0..plan.repeats() {
            let noisy = add_noise(data, level, combine_seed(plan.seed, &[NOISE, l as u64, r as u64]))?;
            let split = make_kfold(&noisy, plan.folds(), combine_seed(plan.seed, &[SPLIT, l as u64, r as u64]))?;
            folds.extend(folds_of(&split, &noisy, r, l, level)?);
        }
    }
    let records = run_folds(plan, &folds, "noise", |m, _| plan.models[m].k)?;
    Ok(ExperimentResult { protocol: plan.protocol, records, curves: Vec::new() })
}

/// Hold out each fraction of the observed entries and predict them.
pub fn run_sparsity(plan: &ExperimentPlan, data: &ObservedMatrix) -> Result<ExperimentResult> {
    check_protocol(plan, &[Protocol::Sparsity])?;
    plan.validate()?;
    let mut folds = Vec::new();
    for (s, &fraction) in plan.fractions.iter().enumerate() {
        for r in 0..plan.repeats() {
            let split = make_holdout(data, fraction, combine_seed(plan.seed, &[SPLIT, s as u64, r as u64]))?;
            folds.extend(folds_of(&split, data, r, s, fraction)?);
        }
    }
    let records = run_folds(plan, &folds, "fraction", |m, _| plan.models[m].k)?;
    Ok(ExperimentResult { protocol: plan.protocol, records, curves: Vec::new() })
}

/// Test MSE over a K grid with a fixed-fraction holdout. The split of a
/// repeat is shared by every K.
pub fn run_model_selection(plan: &ExperimentPlan, data: &ObservedMatrix) -> Result<ExperimentResult> {
    check_protocol(plan, &[Protocol::ModelSelection])?;
    plan.validate()?;
    let grid = plan.grid();
    let mut folds = Vec::new();
    for (g, &k) in grid.iter().enumerate() {
        for r in 0..plan.repeats() {
            let split = make_holdout(data, plan.holdout_fraction, combine_seed(plan.seed, &[SPLIT, 0, r as u64]))?;
            folds.extend(folds_of(&split, data, r, g, k as f64)?);
        }
    }
    let records = run_folds(plan, &folds, "K", |_, f| f.value as usize)?;
    Ok(ExperimentResult { protocol: plan.protocol, records, curves: Vec::new() })
}
