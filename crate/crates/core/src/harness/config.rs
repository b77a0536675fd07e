use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::samplers::SamplerConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Synthetic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitSpec {
    /// Exact draws from the conditioned target.
    OnManifold,
    /// `center + scale · N(0, I)`.
    OffManifold { center: Vec<f64>, scale: f64 },
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec::OffManifold {
            center: vec![1.5, 1.5],
            scale: 0.1,
        }
    }
}

/// One experiment, as stored in a JSON config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub target: TargetKind,
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub init: InitSpec,
    pub ground_truth_n: usize,
    /// Defaults to `sampler.seed + 2`.
    #[serde(default)]
    pub ground_truth_seed: Option<u64>,
    /// Defaults to `sampler.seed + 1`.
    #[serde(default)]
    pub init_seed: Option<u64>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.ground_truth_n < 100 {
            return Err(Error::InvalidConfig("ground_truth_n must be >= 100".into()));
        }
        if let InitSpec::OffManifold { center, scale } = &self.init {
            if center.len() != 2 {
                return Err(Error::DimensionMismatch {
                    expected: 2,
                    found: center.len(),
                });
            }
            if !(*scale >= 0.0 && scale.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "init scale must be >= 0, got {scale}"
                )));
            }
        }
        self.sampler.validate()?;
        Ok(())
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed.unwrap_or(self.sampler.seed.wrapping_add(1))
    }

    pub fn ground_truth_seed(&self) -> u64 {
        self.ground_truth_seed
            .unwrap_or(self.sampler.seed.wrapping_add(2))
    }

    /// Copy with every defaulted seed made explicit.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        out.init_seed = Some(self.init_seed());
        out.ground_truth_seed = Some(self.ground_truth_seed());
        out
    }
}
