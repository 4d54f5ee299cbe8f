//! Run configuration, read from TOML whose keys mirror the field names.

use std::path::{Path, PathBuf};

use egno_core::dataset::DatasetSpec;
use egno_core::model::EgnoConfig;
use egno_tensor::AdamConfig;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::variant;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let a = AdamConfig::default();
        Self {
            lr: a.lr,
            weight_decay: a.weight_decay,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
        }
    }
}

impl OptimizerConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Registered variant name, see [`variant::names`].
    pub model: String,
    pub egno: EgnoConfig,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Directory holding `train.egnods`, `valid.egnods`, `test.egnods`.
    pub data: PathBuf,
    pub out: PathBuf,
    /// Keeps only the first trajectories of the training split.
    pub train_size: Option<usize>,
    /// Used by `gen`.
    pub dataset: DatasetSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: "egno".into(),
            egno: EgnoConfig::default(),
            optimizer: OptimizerConfig::default(),
            batch_size: 100,
            max_epochs: 1000,
            patience: 50,
            seed: 0,
            data: PathBuf::from("data"),
            out: PathBuf::from("runs"),
            train_size: None,
            dataset: DatasetSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|source| HarnessError::Toml {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(HarnessError::Config("batch_size must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(HarnessError::Config("patience must be at least 1".into()));
        }
        if self.train_size == Some(0) {
            return Err(HarnessError::Config("train_size must be at least 1".into()));
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0 && o.lr.is_finite()) || o.weight_decay < 0.0 {
            return Err(HarnessError::Config(format!(
                "need lr > 0 and weight_decay ≥ 0, got {} and {}",
                o.lr, o.weight_decay
            )));
        }
        variant::lookup(&self.model)?;
        Ok(())
    }
}
