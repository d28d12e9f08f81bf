//! Run configuration files.
//!
//! A TOML file with optional top-level paths and the library's own config
//! sections. Unknown keys are rejected. Command-line flags override values
//! read from the file, and the merged result is written next to the outputs
//! as `config.resolved.toml`.

use std::fs;
use std::path::{Path, PathBuf};

use bmf::experiments::ExperimentPlan;
use bmf::inference::SamplerConfig;
use bmf::models::ModelSpec;
use bmf::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// `row,col` pairs to predict (fit only); every cell when absent.
    pub predict: Option<PathBuf>,
    /// Rows/columns with fewer observations are dropped at load time.
    pub min_observed: usize,
    /// Round values half-up to integers before fitting.
    pub round_counts: bool,
    /// Fit only.
    pub model: Option<ModelSpec>,
    /// Fit only; experiments carry their own sampler section in `plan`.
    pub sampler: SamplerConfig,
    /// Experiment only.
    pub plan: Option<ExperimentPlan>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            out: None,
            predict: None,
            min_observed: 3,
            round_counts: false,
            model: None,
            sampler: SamplerConfig::default(),
            plan: None,
        }
    }
}

pub fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn render(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialise config: {e}")))
    }
}
