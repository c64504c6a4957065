//! Experiment configuration, read from TOML.
//!
//! ```toml
//! seed = 7
//! out = "curve.csv"
//!
//! [belief]
//! kind = "beta"
//! alpha = 2.0
//! beta = 5.0
//!
//! [utility]
//! family = "exponential"
//! parameter = 1.0
//!
//! [mechanism]
//! alpha = 0.5
//! reward = 1.0
//! variant = "genie"   # or "naive"
//!
//! [grid]
//! points = 101
//! trials = 100000
//!
//! [verify]
//! tolerance = 1e-4
//! levels = [0.05, 0.25, 0.5, 0.75, 0.95]
//! sweep = true
//!
//! [simulate]
//! strategies = ["truthful", "optimizer", { fixed = 0.9 }]
//! ```
//!
//! Every section is optional.

use std::path::{Path, PathBuf};

use elicit_core::simulation::Strategy;
use elicit_core::{BeliefSpec, MechanismConfig, Utility};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Genie,
    /// Pays `r·α` on the `d` branch instead of drawing `d`.
    Naive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismSection {
    pub alpha: f64,
    pub reward: f64,
    #[serde(default)]
    pub variant: Variant,
}

impl Default for MechanismSection {
    fn default() -> Self {
        Self { alpha: 0.5, reward: 1.0, variant: Variant::Genie }
    }
}

impl MechanismSection {
    pub fn config(&self) -> Result<MechanismConfig, CliError> {
        MechanismConfig::new(self.alpha, self.reward).map_err(|e| CliError::Config(format!("[mechanism]: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    /// Evenly spaced report values on `[0, 1]`, endpoints included.
    pub points: usize,
    /// Monte Carlo draws per grid point or per strategy.
    pub trials: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { points: 101, trials: 100_000 }
    }
}

impl GridSection {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        if self.points < 2 {
            return Err(CliError::Config(format!("[grid] points must be at least 2, got {}", self.points)));
        }
        let last = (self.points - 1) as f64;
        Ok((0..self.points).map(|i| i as f64 / last).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub tolerance: f64,
    pub levels: Vec<f64>,
    /// Adds the standard beliefs and utilities to the configured ones.
    pub sweep: bool,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self { tolerance: 1e-4, levels: vec![0.05, 0.25, 0.5, 0.75, 0.95], sweep: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub strategies: Vec<Strategy>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { strategies: vec![Strategy::Truthful, Strategy::Optimizer] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub belief: BeliefSpec,
    pub utility: Utility,
    pub mechanism: MechanismSection,
    pub grid: GridSection,
    pub verify: VerifySection,
    pub simulate: SimulateSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out: None,
            belief: BeliefSpec::Uniform,
            utility: Utility::Linear,
            mechanism: MechanismSection::default(),
            grid: GridSection::default(),
            verify: VerifySection::default(),
            simulate: SimulateSection::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML text; errors carry the line and column.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Fails for seeds above `i64::MAX`, which TOML integers cannot hold.
    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| CliError::Config("a seed is required: pass --seed or set `seed` in the config".into()))
    }
}
