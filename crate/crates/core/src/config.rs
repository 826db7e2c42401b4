//! Run configuration, read from TOML.
//!
//! Relative paths are resolved against the directory holding the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::{McmcSettings, PriorSpec};
use crate::multsample::{KPolicy, RatioSource};
use crate::par::Execution;
use crate::ratio::RatioConfig;
use crate::regression::{RegressionPreset, RegressionSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every stream is derived from it.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub execution: Execution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio_bench: Option<RatioBenchConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnose: Option<DiagnoseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predict: Option<PredictConfig>,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub lambda: Vec<f64>,
    pub nu: Vec<f64>,
    #[serde(default)]
    pub delta: Vec<f64>,
    /// Unused when there is a single component.
    #[serde(default = "default_omega")]
    pub omega: f64,
    pub n: usize,
    #[serde(default = "default_ratio_source")]
    pub ratio: RatioSource,
    #[serde(default)]
    pub k_policy: KPolicy,
}

fn default_omega() -> f64 {
    1.0
}

fn default_ratio_source() -> RatioSource {
    RatioSource::Exact
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatioBenchConfig {
    pub grid: Vec<RatioConfig>,
    pub n_totals: Vec<usize>,
    #[serde(default = "default_replications")]
    pub replications: usize,
}

fn default_replications() -> usize {
    200
}

/// A named preset or a fully spelled-out regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RegressionChoice {
    Preset(RegressionPreset),
    Custom(RegressionSpec),
}

impl RegressionChoice {
    pub fn spec(&self) -> RegressionSpec {
        match self {
            RegressionChoice::Preset(p) => RegressionSpec::preset(*p),
            RegressionChoice::Custom(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Count CSV, or match CSV when a regression is given.
    pub data: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regression: Option<RegressionChoice>,
    #[serde(default)]
    pub mcmc: McmcSettings,
    #[serde(default)]
    pub prior: PriorSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    /// Directory holding `draws_chain<k>.csv`.
    pub draws: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    /// Directory holding `draws_chain<k>.csv`.
    pub draws: PathBuf,
    pub regression: RegressionChoice,
    pub n_pre: usize,
    pub n_pand: usize,
    pub n_replicates: usize,
    #[serde(default = "default_model_tag")]
    pub model_tag: String,
    #[serde(default)]
    pub k_policy: KPolicy,
}

fn default_model_tag() -> String {
    "model".into()
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads the file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(f) = &mut self.fit {
            fix(&mut f.data);
        }
        if let Some(d) = &mut self.diagnose {
            fix(&mut d.draws);
        }
        if let Some(p) = &mut self.predict {
            fix(&mut p.draws);
        }
    }
}
