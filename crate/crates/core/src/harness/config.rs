use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modmath::SecurityProfile;
use crate::protocol::JlMode;
use crate::quantizer::QuantConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExperimentScheme {
    #[serde(rename = "JL", alias = "jl")]
    Jl,
    #[serde(rename = "LOM", alias = "lom")]
    Lom,
    #[serde(rename = "PLAIN", alias = "plain")]
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JlModeSetting {
    Naive,
    #[default]
    Packed,
}

impl From<JlModeSetting> for JlMode {
    fn from(m: JlModeSetting) -> Self {
        match m {
            JlModeSetting::Naive => JlMode::Naive,
            JlModeSetting::Packed => JlMode::Packed,
        }
    }
}

/// Synthetic linear-regression task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSpec {
    /// Standard deviation of the target noise.
    pub noise: f64,
    /// Scale of the per-node shift of feature means.
    pub heterogeneity: f64,
    /// Inclusive range of per-node training-set sizes; sizes double as
    /// FedAvg weights.
    pub samples_per_node: [usize; 2],
    pub test_samples: usize,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            noise: 0.1,
            heterogeneity: 0.5,
            samples_per_node: [50, 200],
            test_samples: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheme: ExperimentScheme,
    pub n_tot: usize,
    pub n: usize,
    #[serde(rename = "T")]
    pub rounds: u64,
    /// Local SGD steps per round.
    pub e: usize,
    /// Minibatch size.
    pub b: usize,
    pub eta: f64,
    #[serde(rename = "L")]
    pub input_bits: u32,
    #[serde(rename = "W")]
    pub weight_bits: u32,
    pub clip_range: [f64; 2],
    /// Shamir threshold for JL setup, `ceil(2 n_tot / 3)` when omitted.
    #[serde(default)]
    pub t: Option<usize>,
    #[serde(default = "default_profile")]
    pub profile: SecurityProfile,
    #[serde(default)]
    pub seed: u64,
    pub d: usize,
    #[serde(default)]
    pub task: TaskSpec,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub jl_mode: JlModeSetting,
}

fn default_profile() -> SecurityProfile {
    SecurityProfile::Test
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn threshold(&self) -> usize {
        self.t.unwrap_or_else(|| (2 * self.n_tot).div_ceil(3))
    }

    /// Quantizer for a cohort of `n`.
    pub fn quant(&self) -> Result<QuantConfig, ConfigError> {
        QuantConfig::new(
            self.input_bits,
            self.weight_bits,
            self.n,
            self.clip_range[0],
            self.clip_range[1],
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if self.n < 2 {
            return invalid(format!("n must be at least 2, got {}", self.n));
        }
        if self.n > self.n_tot {
            return invalid(format!("n = {} exceeds n_tot = {}", self.n, self.n_tot));
        }
        if self.scheme == ExperimentScheme::Jl && self.n != self.n_tot {
            return invalid("JL does not support client selection: n must equal n_tot".into());
        }
        let t = self.threshold();
        if t == 0 || t > self.n_tot {
            return invalid(format!("threshold t = {t} must be in 1..={}", self.n_tot));
        }
        if self.d == 0 {
            return invalid("d must be positive".into());
        }
        if self.e == 0 || self.b == 0 {
            return invalid("e and b must be positive".into());
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return invalid(format!("eta must be positive, got {}", self.eta));
        }
        self.quant()?;
        let [lo, hi] = self.task.samples_per_node;
        if lo == 0 || lo > hi {
            return invalid(format!("samples_per_node range [{lo}, {hi}] is empty"));
        }
        if (hi as u64) >> self.weight_bits != 0 {
            return invalid(format!(
                "{hi} samples per node does not fit the {}-bit weight",
                self.weight_bits
            ));
        }
        if self.task.test_samples == 0 {
            return invalid("test_samples must be positive".into());
        }
        if !(self.task.noise >= 0.0 && self.task.heterogeneity >= 0.0) {
            return invalid("noise and heterogeneity must be non-negative".into());
        }
        Ok(())
    }
}
