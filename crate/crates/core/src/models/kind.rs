use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The sixteen Bayesian models plus the NMF baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModelKind {
    Ggg,
    Gggu,
    Ggga,
    Gggw,
    Gll,
    Glli,
    Gvg,
    Gee,
    Geea,
    Gtt,
    Gttn,
    Gl21,
    Geg,
    Gvng,
    Pgg,
    Pggg,
    Nmf,
}

/// How one factor matrix is updated and what prior it carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SidePrior {
    /// Row-wise multivariate Gaussian with precision lambda I.
    Gaussian,
    /// Row-wise, diag(lambda_k).
    Ard,
    /// Row-wise, N(mu, Sigma) with NIW hyperprior.
    Wishart,
    /// Row-wise, per-entry variances (Laplace scale mixture).
    Laplace,
    /// Entry-wise Gaussian, precision lambda.
    GaussianUni,
    Exponential,
    ExponentialArd,
    TruncNormal,
    TruncNormalHier,
    L21,
    Volume { nonnegative: bool },
    Gamma,
    GammaHier,
    Nmf,
}

impl ModelKind {
    pub const ALL: [ModelKind; 17] = [
        ModelKind::Ggg,
        ModelKind::Gggu,
        ModelKind::Ggga,
        ModelKind::Gggw,
        ModelKind::Gll,
        ModelKind::Glli,
        ModelKind::Gvg,
        ModelKind::Gee,
        ModelKind::Geea,
        ModelKind::Gtt,
        ModelKind::Gttn,
        ModelKind::Gl21,
        ModelKind::Geg,
        ModelKind::Gvng,
        ModelKind::Pgg,
        ModelKind::Pggg,
        ModelKind::Nmf,
    ];

    /// The Bayesian kinds (everything except NMF).
    pub fn bayesian() -> impl Iterator<Item = ModelKind> {
        Self::ALL.into_iter().filter(|k| *k != ModelKind::Nmf)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ggg => "GGG",
            ModelKind::Gggu => "GGGU",
            ModelKind::Ggga => "GGGA",
            ModelKind::Gggw => "GGGW",
            ModelKind::Gll => "GLL",
            ModelKind::Glli => "GLLI",
            ModelKind::Gvg => "GVG",
            ModelKind::Gee => "GEE",
            ModelKind::Geea => "GEEA",
            ModelKind::Gtt => "GTT",
            ModelKind::Gttn => "GTTN",
            ModelKind::Gl21 => "GL21",
            ModelKind::Geg => "GEG",
            ModelKind::Gvng => "GVnG",
            ModelKind::Pgg => "PGG",
            ModelKind::Pggg => "PGGG",
            ModelKind::Nmf => "NMF",
        }
    }

    pub fn is_poisson(self) -> bool {
        matches!(self, ModelKind::Pgg | ModelKind::Pggg)
    }

    pub fn is_gaussian_likelihood(self) -> bool {
        !self.is_poisson() && self != ModelKind::Nmf
    }

    pub fn is_volume(self) -> bool {
        matches!(self, ModelKind::Gvg | ModelKind::Gvng)
    }

    pub fn u_nonnegative(self) -> bool {
        !matches!(
            self,
            ModelKind::Ggg
                | ModelKind::Gggu
                | ModelKind::Ggga
                | ModelKind::Gggw
                | ModelKind::Gll
                | ModelKind::Glli
                | ModelKind::Gvg
        )
    }

    pub fn v_nonnegative(self) -> bool {
        self.u_nonnegative() && !matches!(self, ModelKind::Geg | ModelKind::Gvng)
    }

    pub(crate) fn prior(self, side: Side) -> SidePrior {
        use ModelKind::*;
        match (self, side) {
            (Ggg, _) | (Geg | Gvg | Gvng, Side::V) => SidePrior::Gaussian,
            (Gggu, _) => SidePrior::GaussianUni,
            (Ggga, _) => SidePrior::Ard,
            (Gggw, _) => SidePrior::Wishart,
            (Gll | Glli, _) => SidePrior::Laplace,
            (Gee, _) | (Geg, Side::U) => SidePrior::Exponential,
            (Geea, _) => SidePrior::ExponentialArd,
            (Gtt, _) => SidePrior::TruncNormal,
            (Gttn, _) => SidePrior::TruncNormalHier,
            (Gl21, _) => SidePrior::L21,
            (Gvg, Side::U) => SidePrior::Volume { nonnegative: false },
            (Gvng, Side::U) => SidePrior::Volume { nonnegative: true },
            (Pgg, _) => SidePrior::Gamma,
            (Pggg, _) => SidePrior::GammaHier,
            (Nmf, _) => SidePrior::Nmf,
        }
    }
}

/// Which factor matrix an update acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    U,
    V,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::U, Side::V];

    pub(crate) fn index(self) -> usize {
        match self {
            Side::U => 0,
            Side::V => 1,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let wanted = s.trim().to_ascii_uppercase();
        let wanted = match wanted.as_str() {
            "GL²₁" | "GL2_1" => "GL21".to_string(),
            _ => wanted,
        };
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().to_ascii_uppercase() == wanted)
            .ok_or_else(|| Error::Config(format!("unknown model {s:?}")))
    }
}

impl TryFrom<String> for ModelKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModelKind> for String {
    fn from(k: ModelKind) -> String {
        k.name().to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_roundtrip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        assert_eq!("gvng".parse::<ModelKind>().unwrap(), ModelKind::Gvng);
        assert!("GXG".parse::<ModelKind>().is_err());
    }

    #[test]
    fn constraint_flags() {
        assert!(ModelKind::Geg.u_nonnegative() && !ModelKind::Geg.v_nonnegative());
        assert!(ModelKind::Gvng.u_nonnegative() && !ModelKind::Gvng.v_nonnegative());
        assert!(ModelKind::Pggg.v_nonnegative());
        assert!(!ModelKind::Gvg.u_nonnegative());
        assert_eq!(ModelKind::bayesian().count(), 16);
    }
}
