//! Samplers for every density the models use.
//!
//! All parameters are validated; nothing is silently clamped. Precisions and
//! rates follow the conventions used throughout the crate: Gaussians are
//! parameterised by precision, Gamma by (shape, rate).

use nalgebra::{DMatrix, DVector};
use rand::distr::{Distribution, Open01};
use rand::Rng;
use rand_distr::{Binomial, Gamma, Poisson, StandardNormal};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_jittered, sample_with_precision_factor, symmetrise};
use crate::rng::RngHandle;

/// Below this standardised lower bound the inverse-CDF route is used;
/// above it, exponential rejection.
const TAIL_SWITCH: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct NiwParams {
    pub mean: DVector<f64>,
    pub kappa: f64,
    pub dof: f64,
    pub scale: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct NiwDraw {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub precision: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DistributionParams {
    Gaussian { mean: f64, precision: f64 },
    MultivariateGaussian { mean: DVector<f64>, covariance: DMatrix<f64> },
    Gamma { shape: f64, rate: f64 },
    NormalInverseWishart(NiwParams),
    Laplace { mean: f64, scale: f64 },
    InverseGaussian { mean: f64, shape: f64 },
    Exponential { rate: f64 },
    TruncatedNormal { mean: f64, precision: f64 },
    Poisson { rate: f64 },
    Multinomial { n: u64, probs: Vec<f64> },
}

#[derive(Debug, Clone)]
pub enum Draw {
    Scalar(f64),
    Vector(DVector<f64>),
    Counts(Vec<u64>),
    MeanCovariance(DVector<f64>, DMatrix<f64>),
}

impl Draw {
    pub fn scalar(&self) -> Option<f64> {
        match self {
            Draw::Scalar(x) => Some(*x),
            _ => None,
        }
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite and > 0, got {x}")))
    }
}

fn finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite, got {x}")))
    }
}

/// Draw from any supported distribution.
pub fn sample(params: &DistributionParams, rng: &mut RngHandle) -> Result<Draw> {
    use DistributionParams as P;
    Ok(match params {
        P::Gaussian { mean, precision } => Draw::Scalar(gaussian(*mean, *precision, rng)?),
        P::MultivariateGaussian { mean, covariance } => {
            Draw::Vector(multivariate_gaussian(mean, covariance, rng)?)
        }
        P::Gamma { shape, rate } => Draw::Scalar(gamma(*shape, *rate, rng)?),
        P::NormalInverseWishart(p) => {
            let d = normal_inverse_wishart(p, rng)?;
            Draw::MeanCovariance(d.mean, d.covariance)
        }
        P::Laplace { mean, scale } => Draw::Scalar(laplace(*mean, *scale, rng)?),
        P::InverseGaussian { mean, shape } => Draw::Scalar(inverse_gaussian(*mean, *shape, rng)?),
        P::Exponential { rate } => Draw::Scalar(exponential(*rate, rng)?),
        P::TruncatedNormal { mean, precision } => {
            Draw::Scalar(truncated_normal(*mean, *precision, rng)?)
        }
        P::Poisson { rate } => Draw::Scalar(poisson(*rate, rng)?),
        P::Multinomial { n, probs } => Draw::Counts(multinomial(*n, probs, rng)?),
    })
}

pub fn standard_normal(rng: &mut RngHandle) -> f64 {
    StandardNormal.sample(rng)
}

pub fn gaussian(mean: f64, precision: f64, rng: &mut RngHandle) -> Result<f64> {
    finite("mean", mean)?;
    positive("precision", precision)?;
    Ok(mean + standard_normal(rng) / precision.sqrt())
}

pub fn gamma(shape: f64, rate: f64, rng: &mut RngHandle) -> Result<f64> {
    positive("shape", shape)?;
    positive("rate", rate)?;
    let g = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::InvalidParameter(format!("gamma({shape}, {rate}): {e}")))?;
    // Gamma draws can underflow to exactly zero for tiny shapes.
    Ok(g.sample(rng).max(f64::MIN_POSITIVE))
}

pub fn exponential(rate: f64, rng: &mut RngHandle) -> Result<f64> {
    positive("rate", rate)?;
    let u: f64 = rng.sample(Open01);
    Ok(-u.ln() / rate)
}

pub fn laplace(mean: f64, scale: f64, rng: &mut RngHandle) -> Result<f64> {
    finite("mean", mean)?;
    positive("scale", scale)?;
    let u: f64 = rng.sample::<f64, _>(Open01) - 0.5;
    Ok(mean - scale * u.signum() * (1.0 - 2.0 * u.abs()).ln())
}

pub fn poisson(rate: f64, rng: &mut RngHandle) -> Result<f64> {
    if rate == 0.0 {
        return Ok(0.0);
    }
    positive("rate", rate)?;
    let p = Poisson::new(rate)
        .map_err(|e| Error::InvalidParameter(format!("poisson({rate}): {e}")))?;
    Ok(p.sample(rng))
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal draw conditioned on `z >= lower`.
fn standard_normal_above(lower: f64, rng: &mut RngHandle) -> f64 {
    if lower < TAIL_SWITCH {
        // Invert the upper tail: P(Z > z) = u * P(Z > lower).
        let upper_mass = 0.5 * erfc(lower / std::f64::consts::SQRT_2);
        let u: f64 = rng.sample(Open01);
        let z = std::f64::consts::SQRT_2 * erfc_inv(2.0 * u * upper_mass);
        z.max(lower)
    } else {
        // Robert (1995) exponential proposal with the optimal rate.
        let alpha = 0.5 * (lower + (lower * lower + 4.0).sqrt());
        loop {
            let e: f64 = rng.sample(Open01);
            let z = lower - e.ln() / alpha;
            let u: f64 = rng.sample(Open01);
            if u.ln() <= -0.5 * (z - alpha) * (z - alpha) {
                return z;
            }
        }
    }
}

/// Normal(mean, 1/precision) truncated to `[0, inf)`.
pub fn truncated_normal(mean: f64, precision: f64, rng: &mut RngHandle) -> Result<f64> {
    finite("mean", mean)?;
    positive("precision", precision)?;
    let sd = 1.0 / precision.sqrt();
    let lower = -mean / sd;
    let z = standard_normal_above(lower, rng);
    Ok((mean + z * sd).max(0.0))
}

/// Inverse Gaussian via the transformation-with-uniform-correction method
/// of Michael, Schucany & Haas, in a form that stays accurate when
/// `mean / shape` is very large.
pub fn inverse_gaussian(mean: f64, shape: f64, rng: &mut RngHandle) -> Result<f64> {
    positive("mean", mean)?;
    positive("shape", shape)?;
    let n = standard_normal(rng);
    let y = n * n;
    let q = mean * y / (2.0 * shape);
    // mean * (1 + q - sqrt(q^2 + 2q)), rationalised
    let x = mean / (1.0 + q + (q * q + 2.0 * q).sqrt());
    let u: f64 = rng.random();
    let out = if u <= mean / (mean + x) { x } else { mean * mean / x };
    Ok(out.max(f64::MIN_POSITIVE))
}

pub fn multivariate_gaussian(
    mean: &DVector<f64>,
    covariance: &DMatrix<f64>,
    rng: &mut RngHandle,
) -> Result<DVector<f64>> {
    let k = mean.len();
    if covariance.nrows() != k || covariance.ncols() != k {
        return Err(Error::InvalidParameter(format!(
            "covariance must be {k}x{k}, got {}x{}",
            covariance.nrows(),
            covariance.ncols()
        )));
    }
    let chol = nalgebra::Cholesky::new(covariance.clone()).ok_or_else(|| {
        Error::InvalidParameter("covariance is not symmetric positive-definite".into())
    })?;
    let z = DVector::from_fn(k, |_, _| standard_normal(rng));
    Ok(mean + chol.l() * z)
}

/// Draw from N(mean, precision^{-1}) given the precision matrix.
pub fn multivariate_gaussian_precision(
    mean: &DVector<f64>,
    precision: &DMatrix<f64>,
    rng: &mut RngHandle,
) -> Result<DVector<f64>> {
    let chol = cholesky_jittered(precision)?;
    let z = DVector::from_fn(mean.len(), |_, _| standard_normal(rng));
    Ok(sample_with_precision_factor(&chol, mean, z))
}

/// Categorical split of `n` trials. `probs` must be a probability vector.
pub fn multinomial(n: u64, probs: &[f64], rng: &mut RngHandle) -> Result<Vec<u64>> {
    if probs.is_empty() {
        return Err(Error::InvalidParameter("multinomial needs >= 1 category".into()));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidParameter("multinomial probabilities must be >= 0".into()));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "multinomial probabilities sum to {total}, not 1"
        )));
    }
    Ok(multinomial_weights(n, probs, rng))
}

/// Multinomial with unnormalised nonnegative weights (at least one positive).
/// Sequential conditional binomials; the counts always sum to `n`.
pub fn multinomial_weights(n: u64, weights: &[f64], rng: &mut RngHandle) -> Vec<u64> {
    let mut out = vec![0u64; weights.len()];
    let mut remaining_n = n;
    let mut remaining_w: f64 = weights.iter().sum();
    let last = weights.len() - 1;
    for (k, &w) in weights.iter().enumerate() {
        if remaining_n == 0 {
            break;
        }
        if k == last {
            out[k] = remaining_n;
            break;
        }
        let p = if remaining_w > 0.0 { (w / remaining_w).clamp(0.0, 1.0) } else { 0.0 };
        let x = if p >= 1.0 {
            remaining_n
        } else if p <= 0.0 {
            0
        } else {
            Binomial::new(remaining_n, p)
                .expect("p in (0,1)")
                .sample(rng)
        };
        out[k] = x;
        remaining_n -= x;
        remaining_w -= w;
    }
    out
}

/// Wishart draw via the Bartlett decomposition, returning the lower
/// triangular factor `B` with `B B^T ~ Wishart(dof, scale)`.
fn wishart_factor(dof: f64, scale: &DMatrix<f64>, rng: &mut RngHandle) -> Result<DMatrix<f64>> {
    let k = scale.nrows();
    let l = cholesky_jittered(scale)?.l();
    let mut a = DMatrix::zeros(k, k);
    for i in 0..k {
        let df = dof - i as f64;
        // chi-square(df) = Gamma(df/2, rate 1/2)
        a[(i, i)] = gamma(df / 2.0, 0.5, rng)?.sqrt();
        for j in 0..i {
            a[(i, j)] = standard_normal(rng);
        }
    }
    Ok(l * a)
}

pub fn wishart(dof: f64, scale: &DMatrix<f64>, rng: &mut RngHandle) -> Result<DMatrix<f64>> {
    let k = scale.nrows();
    if dof <= k as f64 - 1.0 {
        return Err(Error::InvalidParameter(format!("wishart dof {dof} must exceed {}", k - 1)));
    }
    let b = wishart_factor(dof, scale, rng)?;
    Ok(&b * b.transpose())
}

/// Normal-inverse-Wishart: `Sigma ~ IW(dof, scale)`, `mu | Sigma ~ N(mean, Sigma / kappa)`.
///
/// The inverse-Wishart draw is the inverse of a Wishart draw with the
/// inverse scale. The precision is returned alongside so callers do not
/// need to re-invert.
pub fn normal_inverse_wishart(p: &NiwParams, rng: &mut RngHandle) -> Result<NiwDraw> {
    let k = p.mean.len();
    if p.scale.nrows() != k || p.scale.ncols() != k {
        return Err(Error::InvalidParameter(format!("NIW scale must be {k}x{k}")));
    }
    positive("kappa", p.kappa)?;
    if !(p.dof >= k as f64) || !p.dof.is_finite() {
        return Err(Error::InvalidParameter(format!("NIW dof {} must be >= K = {k}", p.dof)));
    }
    if p.mean.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("NIW mean must be finite".into()));
    }
    let scale_inv = {
        let chol = cholesky_jittered(&p.scale)?;
        let mut inv = chol.inverse();
        symmetrise(&mut inv);
        inv
    };
    let b = wishart_factor(p.dof, &scale_inv, rng)?;
    let mut precision = &b * b.transpose();
    symmetrise(&mut precision);
    // b is lower triangular with a positive diagonal: Sigma = B^{-T} B^{-1}.
    let b_inv = b
        .solve_lower_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Decomposition("singular Bartlett factor".into()))?;
    let mut covariance = b_inv.transpose() * &b_inv;
    symmetrise(&mut covariance);
    if nalgebra::Cholesky::new(covariance.clone()).is_none() {
        for i in 0..k {
            covariance[(i, i)] += 1e-10;
        }
    }
    // mu = mean + B^{-T} z / sqrt(kappa) has covariance Sigma / kappa.
    let z = DVector::from_fn(k, |_, _| standard_normal(rng));
    let mean = &p.mean + b_inv.transpose() * z / p.kappa.sqrt();
    Ok(NiwDraw {
        mean,
        covariance,
        precision,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn rejects_invalid_parameters() {
        let mut rng = RngHandle::new(0);
        assert!(gaussian(0.0, 0.0, &mut rng).is_err());
        assert!(gamma(-1.0, 1.0, &mut rng).is_err());
        assert!(gamma(1.0, 0.0, &mut rng).is_err());
        assert!(truncated_normal(0.0, -1.0, &mut rng).is_err());
        assert!(inverse_gaussian(0.0, 1.0, &mut rng).is_err());
        assert!(exponential(f64::NAN, &mut rng).is_err());
        assert!(multinomial(3, &[0.5, 0.6], &mut rng).is_err());
        let bad_cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(multivariate_gaussian(&DVector::zeros(2), &bad_cov, &mut rng).is_err());
        let niw = NiwParams {
            mean: DVector::zeros(2),
            kappa: 1.0,
            dof: 1.0,
            scale: DMatrix::identity(2, 2),
        };
        assert!(normal_inverse_wishart(&niw, &mut rng).is_err());
    }

    #[test]
    fn degenerate_gaussian_concentrates() {
        let mut rng = RngHandle::new(11);
        for _ in 0..100 {
            let x = gaussian(3.0, 1e12, &mut rng).unwrap();
            assert!((x - 3.0).abs() < 1e-5);
        }
    }

    #[test]
    fn one_category_multinomial() {
        let mut rng = RngHandle::new(5);
        let d = multinomial(7, &[1.0, 0.0, 0.0], &mut rng).unwrap();
        assert_eq!(d, vec![7, 0, 0]);
    }

    #[test]
    fn gamma_mean_matches() {
        let mut rng = RngHandle::new(99);
        let xs: Vec<f64> = (0..100_000).map(|_| gamma(2.0, 3.0, &mut rng).unwrap()).collect();
        let (m, _) = mean_var(&xs);
        let se = (2.0f64 / 9.0).sqrt() / (xs.len() as f64).sqrt();
        assert!((m - 2.0 / 3.0).abs() < 3.0 * se, "mean {m}");
    }

    #[test]
    fn truncated_normal_high_precision_is_untruncated() {
        let mut rng = RngHandle::new(1);
        for _ in 0..1000 {
            let x = truncated_normal(5.0, 1e8, &mut rng).unwrap();
            assert!((x - 5.0).abs() < 0.01);
        }
    }

    #[test]
    fn truncated_normal_deep_tail_terminates() {
        let mut rng = RngHandle::new(2);
        for _ in 0..1000 {
            let x = truncated_normal(-50.0, 1.0, &mut rng).unwrap();
            assert!(x >= 0.0 && x < 1.0);
        }
    }

    #[test]
    fn inverse_gaussian_extreme_ratio_is_finite() {
        let mut rng = RngHandle::new(4);
        for _ in 0..1000 {
            let x = inverse_gaussian(1e12, 1e-3, &mut rng).unwrap();
            assert!(x.is_finite() && x > 0.0);
            let y = inverse_gaussian(2.0, 1e9, &mut rng).unwrap();
            assert!((y - 2.0).abs() < 0.01);
        }
    }

    #[test]
    fn niw_large_kappa_pins_mean() {
        let mut rng = RngHandle::new(8);
        let p = NiwParams {
            mean: DVector::from_vec(vec![1.0, -2.0]),
            kappa: 1e12,
            dof: 3.0,
            scale: DMatrix::identity(2, 2),
        };
        for _ in 0..200 {
            let d = normal_inverse_wishart(&p, &mut rng).unwrap();
            let sd = (d.covariance.diagonal().max() / p.kappa).sqrt();
            assert!((d.mean - &p.mean).abs().max() < 6.0 * sd);
            assert!(nalgebra::Cholesky::new(d.covariance.clone()).is_some());
            let prod = &d.covariance * &d.precision;
            assert!((prod - DMatrix::identity(2, 2)).abs().max() < 1e-8);
        }
    }
}
