use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::kind::ModelKind;
use crate::error::{Error, Result};

/// Hyperparameters for every model. Fields a model does not use are ignored.
///
/// Optional fields default to values that depend on K: `mu0 = 0`,
/// `nu0 = K`, `w0 = I`, `mu_ig = lambda_ig = K`, and the GTT precisions
/// fall back to `lambda`. `gamma` has no default and is required by the
/// volume-prior models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub alpha_tau: f64,
    pub beta_tau: f64,
    pub lambda: f64,
    pub eta: f64,
    pub alpha0: f64,
    pub beta0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu0: Option<Vec<f64>>,
    pub beta0_niw: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w0: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_ig: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_ig: Option<f64>,
    pub mu_u: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_u: Option<f64>,
    pub mu_v: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_v: Option<f64>,
    pub mu_mu: f64,
    pub tau_mu: f64,
    pub a_tn: f64,
    pub b_tn: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub a: f64,
    pub b: f64,
    pub a_prime: f64,
    pub b_prime: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            alpha_tau: 1.0,
            beta_tau: 1.0,
            lambda: 0.1,
            eta: 10f64.sqrt(),
            alpha0: 1.0,
            beta0: 1.0,
            mu0: None,
            beta0_niw: 1.0,
            nu0: None,
            w0: None,
            mu_ig: None,
            lambda_ig: None,
            mu_u: 0.0,
            tau_u: None,
            mu_v: 0.0,
            tau_v: None,
            mu_mu: 0.0,
            tau_mu: 0.1,
            a_tn: 1.0,
            b_tn: 1.0,
            gamma: None,
            a: 1.0,
            b: 1.0,
            a_prime: 1.0,
            b_prime: 1.0,
        }
    }
}

/// Hyperparameters with every K-dependent default filled in.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub alpha_tau: f64,
    pub beta_tau: f64,
    pub lambda: f64,
    pub eta: f64,
    pub alpha0: f64,
    pub beta0: f64,
    pub mu0: DVector<f64>,
    pub beta0_niw: f64,
    pub nu0: f64,
    pub w0: DMatrix<f64>,
    pub mu_ig: f64,
    pub lambda_ig: f64,
    /// GTT prior (mean, precision) for U and V.
    pub tn: [(f64, f64); 2],
    pub mu_mu: f64,
    pub tau_mu: f64,
    pub a_tn: f64,
    pub b_tn: f64,
    pub gamma: f64,
    pub a: f64,
    pub b: f64,
    pub a_prime: f64,
    pub b_prime: f64,
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {x}")))
    }
}

/// A model kind, its factor count and its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub k: usize,
    #[serde(default)]
    pub hyper: Hyperparams,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, k: usize) -> Self {
        ModelSpec { kind, k, hyper: Hyperparams::default() }
    }

    pub fn with_hyper(mut self, hyper: Hyperparams) -> Self {
        self.hyper = hyper;
        self
    }

    /// Check the spec on its own (data-independent rules).
    pub fn validate(&self) -> Result<()> {
        self.resolve().map(|_| ())
    }

    /// Check the spec against a data shape.
    pub fn validate_for(&self, rows: usize, cols: usize) -> Result<()> {
        self.validate()?;
        if self.kind.is_volume() && self.k > rows.min(cols) {
            return Err(Error::InvalidParameter(format!(
                "{} needs K <= min(I, J) = {}, got K = {}",
                self.kind,
                rows.min(cols),
                self.k
            )));
        }
        Ok(())
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let h = &self.hyper;
        let k = self.k;
        if k == 0 {
            return Err(Error::InvalidParameter("K must be >= 1".into()));
        }
        let kf = k as f64;
        let mu0 = match &h.mu0 {
            None => DVector::zeros(k),
            Some(v) if v.len() == k => DVector::from_column_slice(v),
            Some(v) => {
                return Err(Error::InvalidParameter(format!("mu0 has length {}, expected K = {k}", v.len())))
            }
        };
        let w0 = match &h.w0 {
            None => DMatrix::identity(k, k),
            Some(rows) => {
                if rows.len() != k || rows.iter().any(|r| r.len() != k) {
                    return Err(Error::InvalidParameter(format!("w0 must be {k}x{k}")));
                }
                DMatrix::from_fn(k, k, |i, j| rows[i][j])
            }
        };
        let r = Resolved {
            alpha_tau: h.alpha_tau,
            beta_tau: h.beta_tau,
            lambda: h.lambda,
            eta: h.eta,
            alpha0: h.alpha0,
            beta0: h.beta0,
            mu0,
            beta0_niw: h.beta0_niw,
            nu0: h.nu0.unwrap_or(kf),
            w0,
            mu_ig: h.mu_ig.unwrap_or(kf),
            lambda_ig: h.lambda_ig.unwrap_or(kf),
            tn: [
                (h.mu_u, h.tau_u.unwrap_or(h.lambda)),
                (h.mu_v, h.tau_v.unwrap_or(h.lambda)),
            ],
            mu_mu: h.mu_mu,
            tau_mu: h.tau_mu,
            a_tn: h.a_tn,
            b_tn: h.b_tn,
            gamma: h.gamma.unwrap_or(0.0),
            a: h.a,
            b: h.b,
            a_prime: h.a_prime,
            b_prime: h.b_prime,
        };
        self.check(&r)?;
        Ok(r)
    }

    fn check(&self, r: &Resolved) -> Result<()> {
        use ModelKind::*;
        let kind = self.kind;
        if kind.is_gaussian_likelihood() {
            positive("alpha_tau", r.alpha_tau)?;
            positive("beta_tau", r.beta_tau)?;
        }
        match kind {
            Ggg | Gggu | Gee | Gl21 | Geg | Gvg | Gvng => positive("lambda", r.lambda)?,
            Gll => positive("eta", r.eta)?,
            Glli => {
                positive("mu_ig", r.mu_ig)?;
                positive("lambda_ig", r.lambda_ig)?;
            }
            Ggga | Geea => {
                positive("alpha0", r.alpha0)?;
                positive("beta0", r.beta0)?;
            }
            Gggw => {
                positive("beta0_niw", r.beta0_niw)?;
                if !(r.nu0 > self.k as f64 - 1.0) || !r.nu0.is_finite() {
                    return Err(Error::InvalidParameter(format!("nu0 must be >= K = {}, got {}", self.k, r.nu0)));
                }
                if r.mu0.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidParameter("mu0 must be finite".into()));
                }
                let sym = (&r.w0 - r.w0.transpose()).abs().max() <= 1e-12 * r.w0.abs().max().max(1.0);
                if !sym || r.w0.clone().cholesky().is_none() {
                    return Err(Error::InvalidParameter("w0 must be symmetric positive-definite".into()));
                }
            }
            Gtt => {
                positive("tau_u", r.tn[0].1)?;
                positive("tau_v", r.tn[1].1)?;
                if !r.tn[0].0.is_finite() || !r.tn[1].0.is_finite() {
                    return Err(Error::InvalidParameter("mu_u and mu_v must be finite".into()));
                }
            }
            Gttn => {
                positive("tau_mu", r.tau_mu)?;
                positive("a_tn", r.a_tn)?;
                positive("b_tn", r.b_tn)?;
                if !r.mu_mu.is_finite() {
                    return Err(Error::InvalidParameter("mu_mu must be finite".into()));
                }
            }
            Pgg | Pggg => {
                positive("a", r.a)?;
                if kind == Pgg {
                    positive("b", r.b)?;
                } else {
                    positive("a_prime", r.a_prime)?;
                    positive("b_prime", r.b_prime)?;
                }
            }
            Nmf => {}
        }
        if kind.is_volume() {
            match self.hyper.gamma {
                None => {
                    return Err(Error::Config(format!(
                        "{kind} requires the volume-prior strength `gamma` (no default)"
                    )))
                }
                Some(g) if !(g >= 0.0) || !g.is_finite() => {
                    return Err(Error::InvalidParameter(format!("gamma must be >= 0, got {g}")))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_defaults() {
        let r = ModelSpec::new(ModelKind::Glli, 4).resolve().unwrap();
        assert_eq!((r.alpha_tau, r.beta_tau, r.lambda), (1.0, 1.0, 0.1));
        assert!((r.eta - 10f64.sqrt()).abs() < 1e-15);
        assert_eq!((r.mu_ig, r.lambda_ig), (4.0, 4.0));
        assert_eq!((r.mu_mu, r.tau_mu, r.a_tn, r.b_tn), (0.0, 0.1, 1.0, 1.0));
        assert_eq!(r.nu0, 4.0);
        assert_eq!(r.w0, DMatrix::identity(4, 4));
        assert_eq!(r.tn, [(0.0, 0.1), (0.0, 0.1)]);
    }

    #[test]
    fn volume_models_need_gamma() {
        let spec = ModelSpec::new(ModelKind::Gvg, 2);
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
        let mut h = Hyperparams::default();
        h.gamma = Some(0.0);
        let spec = spec.with_hyper(h);
        assert!(spec.validate().is_ok());
        assert!(spec.validate_for(5, 1).is_err());
    }

    #[test]
    fn rejects_bad_values() {
        let mut spec = ModelSpec::new(ModelKind::Ggg, 3);
        spec.hyper.lambda = 0.0;
        assert!(spec.validate().is_err());
        let mut spec = ModelSpec::new(ModelKind::Gggw, 2);
        spec.hyper.nu0 = Some(0.5);
        assert!(spec.validate().is_err());
        spec.hyper.nu0 = None;
        spec.hyper.w0 = Some(vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(spec.validate().is_err());
        assert!(ModelSpec::new(ModelKind::Ggg, 0).validate().is_err());
    }

    #[test]
    fn toml_rejects_unknown_keys() {
        let ok: Hyperparams = toml::from_str("lambda = 2.0\ngamma = 0.5").unwrap();
        assert_eq!(ok.lambda, 2.0);
        assert_eq!(ok.gamma, Some(0.5));
        assert!(toml::from_str::<Hyperparams>("lamda = 2.0").is_err());
    }
}
