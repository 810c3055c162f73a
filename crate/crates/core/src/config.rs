//! Run configuration: one TOML file covering every stage, with unknown keys
//! rejected and all randomness derived from a root seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::combine::CombineConfig;
use crate::error::{Error, Result};
use crate::eval::EvalBins;
use crate::rng::derive_seed;
use crate::synth::SynthConfig;
use crate::trainer::{CalibConfig, TrainConfig};
use crate::types::{BinBasis, BinScheme};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinsConfig {
    pub instance_edges: Vec<u64>,
    pub image_edges: Vec<u64>,
}

impl Default for BinsConfig {
    fn default() -> Self {
        Self {
            instance_edges: vec![10, 100, 1000],
            image_edges: vec![10, 100],
        }
    }
}

impl BinsConfig {
    pub fn to_eval_bins(&self) -> Result<EvalBins> {
        Ok(EvalBins {
            instances: BinScheme::new(self.instance_edges.clone(), BinBasis::Instances)?,
            images: BinScheme::new(self.image_edges.clone(), BinBasis::Images)?,
        })
    }
}

/// Stage names used to derive per-stage seeds from the root seed.
pub const STAGES: [&str; 4] = ["dataset", "train", "calibrate", "eval"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub calibrate: CalibConfig,
    pub combine: CombineConfig,
    pub bins: BinsConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Toml(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train.schedule.validate()?;
        self.train.loss.validate()?;
        self.train.sampler.validate()?;
        self.calibrate.schedule.validate()?;
        self.calibrate.loss.validate()?;
        self.calibrate.sampler.validate()?;
        self.combine.validate()?;
        self.bins.to_eval_bins()?;
        Ok(())
    }

    /// Seed of one pipeline stage.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage)
    }

    /// Copy with the dataset seed derived from the root seed, as emitted
    /// next to every run's results.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        out.synth.seed = self.stage_seed("dataset");
        out
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}
