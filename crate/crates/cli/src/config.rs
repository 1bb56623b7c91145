//! Experiment configuration files.
//!
//! A config is a JSON object `{experiment, seed?, out?, dt_refine?, params?}`.
//! `params` is read by the experiment named in `experiment`; unknown keys are
//! rejected and missing keys take their defaults.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tnlab::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Split,
    Kubo,
    TnMoments,
    Causality,
    RadiatedCheck,
    Consistency,
    Pfunctional,
    DressToy,
    DressE2e,
    Wiener,
    HbarInvariance,
    ScatterMc,
}

impl Kind {
    pub fn name(&self) -> String {
        serde_json::to_value(self).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
    }
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub experiment: Kind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Refinement factor for experiments that check convergence in `dt`.
    #[serde(default)]
    pub dt_refine: Option<usize>,
    #[serde(default)]
    pub params: serde_json::Value,
}

impl Config {
    pub fn new(experiment: Kind) -> Self {
        Config { experiment, seed: default_seed(), out: None, dt_refine: None, params: serde_json::Value::Null }
    }

    pub fn with_params(mut self, params: serde_json::Value) -> Self {
        self.params = params;
        self
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| Error::validation(format!("config: {e}")))?;
        if let Some(k) = cfg.dt_refine {
            if k < 2 {
                return Err(Error::validation("dt_refine must be at least 2"));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::validation(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Typed experiment parameters; `null` gives the defaults.
    pub fn params<T: DeserializeOwned + Default>(&self) -> Result<T> {
        if self.params.is_null() {
            return Ok(T::default());
        }
        serde_json::from_value(self.params.clone()).map_err(|e| Error::validation(format!("params: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_are_kebab_case() {
        assert_eq!(Kind::DressE2e.name(), "dress-e2e");
        assert_eq!(Kind::HbarInvariance.name(), "hbar-invariance");
        let c = Config::parse(r#"{"experiment": "scatter-mc"}"#).unwrap();
        assert_eq!(c.experiment, Kind::ScatterMc);
        assert_eq!(c.seed, 42);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(Config::parse(r#"{"experiment": "wiener", "sede": 1}"#).is_err());
        assert!(Config::parse(r#"{"experiment": "nope"}"#).is_err());
        assert!(Config::parse(r#"{"experiment": "wiener", "dt_refine": 1}"#).is_err());
    }
}
