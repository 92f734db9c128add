//! Experiment configuration: one JSON document embedding every component
//! config. Command-line flags override file values, and the root seed drives
//! all randomness.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use longtail_core::ensemble::RescoreConfig;
use longtail_core::sampling::SyntheticConfig;
use longtail_core::taxonomy::GroupBounds;
use longtail_core::trainer::TrainConfig;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root seed; overwrites the per-component seeds after loading.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub synthetic: SyntheticConfig,
    pub train: TrainConfig,
    pub rescore: RescoreConfig,
    pub group_bounds: GroupBounds,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            out_dir: PathBuf::from("out"),
            synthetic: SyntheticConfig::default(),
            train: TrainConfig::default(),
            rescore: RescoreConfig::default(),
            group_bounds: GroupBounds::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(longtail_core::Error::from)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    /// Pushes the root seed into every component.
    pub fn apply_seed(&mut self) {
        self.synthetic.seed = self.seed;
        self.train.seed = self.seed;
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.synthetic.validate()?;
        self.train.validate()?;
        self.rescore.validate()?;
        self.group_bounds.validate()?;
        Ok(())
    }
}
