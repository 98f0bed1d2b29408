use std::path::Path;

use anyhow::Context;
use satlab_core::gnn::{TrainConfig, Variant, DEFAULT_HIDDEN_DIM, DEFAULT_MU, DEFAULT_STATE_DIM};
use satlab_core::AnnealConfig;
use serde::{Deserialize, Serialize};

/// Resolved experiment configuration. Every field has a default, so a
/// config file only needs the keys it changes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub phase: PhaseConfig,
    pub anneal: AnnealSweepConfig,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// The default config, or the one at `path` if given.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::from_file)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub num_vars: usize,
    pub ratio: f64,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { num_vars: 20, ratio: 4.4, train: 1000, val: 200, test: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub state_dim: usize,
    pub hidden_dim: usize,
    pub mu: f64,
    /// Replace per-clause edge indicators by a single shared-clause count.
    pub compress_edge_labels: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Nonlinear,
            state_dim: DEFAULT_STATE_DIM,
            hidden_dim: DEFAULT_HIDDEN_DIM,
            mu: DEFAULT_MU,
            compress_edge_labels: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseConfig {
    pub num_vars: usize,
    pub ratios: Vec<f64>,
    pub samples: usize,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        let ratios = (2..=20).map(|k| k as f64 * 0.5).collect();
        Self { num_vars: 20, ratios, samples: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealSweepConfig {
    pub sizes: Vec<usize>,
    pub ratio: f64,
    /// Satisfiable instances per size.
    pub instances: usize,
    /// Solver settings; its seed is derived from the run seed.
    pub solver: AnnealConfig,
}

impl Default for AnnealSweepConfig {
    fn default() -> Self {
        Self { sizes: vec![10, 20, 40, 80], ratio: 4.3, instances: 100, solver: AnnealConfig::default() }
    }
}
