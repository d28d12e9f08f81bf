//! Quick installation checks: sampler moments, the norm identity,
//! determinism, parallel/serial agreement and NMF monotonicity.

use nalgebra::DMatrix;

use crate::data::{generate_synthetic, make_kfold, Family, ObservedMatrix, SynthSpec};
use crate::error::Result;
use crate::inference::{fit, fit_full, SamplerConfig};
use crate::models::{initial_state, log_joint, nmf_step, ModelKind, ModelSpec};
use crate::rng::RngHandle;
use crate::samplers;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, outcome: Result<(bool, String)>) -> Check {
    match outcome {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check { name, passed: false, detail: e.to_string() },
    }
}

const DRAWS: usize = 20_000;

/// Mean of `DRAWS` draws within 5 standard errors of `mean`.
fn moment(mut draw: impl FnMut(&mut RngHandle) -> Result<f64>, mean: f64, var: f64, seed: u64) -> Result<(bool, f64)> {
    let mut rng = RngHandle::new(seed);
    let mut sum = 0.0;
    for _ in 0..DRAWS {
        sum += draw(&mut rng)?;
    }
    let z = (sum / DRAWS as f64 - mean) / (var / DRAWS as f64).sqrt();
    Ok((z.abs() < 5.0, z))
}

fn sampler_moments() -> Result<(bool, String)> {
    let cases: Vec<(&str, Result<(bool, f64)>)> = vec![
        ("gaussian", moment(|r| samplers::gaussian(1.5, 4.0, r), 1.5, 0.25, 1)),
        ("gamma", moment(|r| samplers::gamma(2.5, 0.5, r), 5.0, 10.0, 2)),
        ("exponential", moment(|r| samplers::exponential(3.0, r), 1.0 / 3.0, 1.0 / 9.0, 3)),
        ("laplace", moment(|r| samplers::laplace(0.5, 2.0, r), 0.5, 8.0, 4)),
        ("inverse_gaussian", moment(|r| samplers::inverse_gaussian(2.0, 3.0, r), 2.0, 8.0 / 3.0, 5)),
        ("poisson", moment(|r| samplers::poisson(4.2, r), 4.2, 4.2, 6)),
        // half-normal
        (
            "truncated_normal",
            moment(
                |r| samplers::truncated_normal(0.0, 1.0, r),
                (2.0 / std::f64::consts::PI).sqrt(),
                1.0 - 2.0 / std::f64::consts::PI,
                7,
            ),
        ),
    ];
    let mut failed = Vec::new();
    for (name, res) in cases {
        let (ok, z) = res?;
        if !ok {
            failed.push(format!("{name} (z = {z:.2})"));
        }
    }
    Ok((failed.is_empty(), if failed.is_empty() { "7 distributions".into() } else { failed.join(", ") }))
}

fn instance() -> Result<ObservedMatrix> {
    let spec = SynthSpec {
        rows: 15,
        cols: 12,
        rank: 2,
        family: Family::Nonnegative,
        noise_precision: 4.0,
        fraction_observed: 0.8,
        seed: 11,
    };
    Ok(generate_synthetic(&spec)?.matrix)
}

/// For GGG, log p differs between two states (same tau) by
/// -lambda/2 ΔFrobenius - tau/2 ΔSSE.
fn norm_identity() -> Result<(bool, String)> {
    let data = instance()?;
    let spec = ModelSpec::new(ModelKind::Ggg, 2);
    let lambda = spec.resolve()?.lambda;
    let a = initial_state(&spec, &data, &RngHandle::new(1))?;
    let mut b = initial_state(&spec, &data, &RngHandle::new(2))?;
    b.tau = a.tau;
    let penalised = |s: &crate::models::FactorState| {
        let sse: f64 = data.entries().iter().map(|&(i, j, r)| (r - s.predict_entry(i, j)).powi(2)).sum();
        -0.5 * lambda * (s.u.norm_squared() + s.v.norm_squared()) - 0.5 * s.tau * sse
    };
    let lhs = log_joint(&spec, &a, &data)? - log_joint(&spec, &b, &data)?;
    let rhs = penalised(&a) - penalised(&b);
    let rel = (lhs - rhs).abs() / rhs.abs().max(1e-300);
    Ok((rel < 1e-8, format!("relative error {rel:.2e}")))
}

fn quick_config(seed: u64, parallel_rows: bool) -> SamplerConfig {
    SamplerConfig { n_iterations: 30, burn_in: 10, thinning: 2, seed, parallel_rows, ..SamplerConfig::default() }
}

fn determinism() -> Result<(bool, String)> {
    let data = instance()?;
    let mut same = true;
    for kind in [ModelKind::Ggg, ModelKind::Gee, ModelKind::Pgg] {
        let d = if kind.is_poisson() { data.round_to_counts()? } else { data.clone() };
        let spec = ModelSpec::new(kind, 2);
        let (t1, p1) = fit(&spec, &d, &quick_config(5, true))?;
        let (t2, p2) = fit(&spec, &d, &quick_config(5, true))?;
        let (t3, p3) = fit(&spec, &d, &quick_config(5, false))?;
        same &= t1.training_mse == t2.training_mse && p1 == p2 && t1.training_mse == t3.training_mse && p1 == p3;
    }
    Ok((same, "GGG, GEE, PGG reruns and serial/parallel rows".into()))
}

fn nmf_monotone() -> Result<(bool, String)> {
    let data = instance()?;
    let mut rng = RngHandle::new(3);
    let mut u = DMatrix::from_fn(data.rows(), 3, |_, _| samplers::exponential(1.0, &mut rng).unwrap_or(1.0));
    let mut v = DMatrix::from_fn(data.cols(), 3, |_, _| samplers::exponential(1.0, &mut rng).unwrap_or(1.0));
    let sse = |u: &DMatrix<f64>, v: &DMatrix<f64>| -> f64 {
        data.entries().iter().map(|&(i, j, r)| (r - u.row(i).dot(&v.row(j))).powi(2)).sum()
    };
    let mut prev = sse(&u, &v);
    let mut violations = 0;
    for _ in 0..200 {
        nmf_step(&mut u, &mut v, &data);
        let cur = sse(&u, &v);
        if cur > prev * (1.0 + 1e-12) {
            violations += 1;
        }
        prev = cur;
    }
    Ok((violations == 0, format!("{violations} increases in 200 steps")))
}

fn split_coverage() -> Result<(bool, String)> {
    let data = instance()?;
    let plan = make_kfold(&data, 5, 4)?;
    for f in plan.test_folds() {
        plan.train(&data, f)?;
    }
    let sizes = plan.fold_sizes();
    let spread = sizes.iter().max().unwrap() - sizes.iter().min().unwrap();
    Ok((spread <= 1, format!("fold sizes {sizes:?}")))
}

fn recovery() -> Result<(bool, String)> {
    let data = instance()?;
    let spec = ModelSpec::new(ModelKind::Gee, 2);
    let cfg = SamplerConfig { n_iterations: 200, burn_in: 100, thinning: 1, seed: 1, parallel_rows: false, ..SamplerConfig::default() };
    let f = fit_full(&spec, &data, &cfg, None)?;
    let mse = *f.trace.training_mse.last().unwrap_or(&f64::INFINITY);
    let var = data.observed_variance();
    Ok((mse < 0.5 * var, format!("training MSE {mse:.3} vs data variance {var:.3}")))
}

pub fn run_selftest() -> Vec<Check> {
    vec![
        check("sampler_moments", sampler_moments()),
        check("norm_identity", norm_identity()),
        check("determinism", determinism()),
        check("nmf_monotone", nmf_monotone()),
        check("split_coverage", split_coverage()),
        check("recovery", recovery()),
    ]
}
