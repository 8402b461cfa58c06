//! The merged run configuration: a JSON file overridden by flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vgs_core::analysis::PeakConfig;
use vgs_core::model::ModelConfig;
use vgs_core::retrieval::Aggregator;
use vgs_core::train::TrainConfig;
use vgs_core::{Result, VgsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Half {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct XlingualConfig {
    pub n_trials: usize,
    pub pool: usize,
    pub aggregator: Aggregator,
    /// Upper bound on the number of pivot images taken from the pivot manifest.
    pub max_pivots: usize,
}

impl Default for XlingualConfig {
    fn default() -> Self {
        XlingualConfig {
            n_trials: 10,
            pool: 1000,
            aggregator: Aggregator::Min,
            max_pivots: 500,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub spec: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub val_manifest: Option<PathBuf>,
    pub reference_manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub src_checkpoint: Option<PathBuf>,
    pub tgt_checkpoint: Option<PathBuf>,
    pub src_manifest: Option<PathBuf>,
    pub tgt_manifest: Option<PathBuf>,
    pub pivot_manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    /// Every random stream is derived from this seed and a subsystem name.
    pub seed: u64,
    pub threads: Option<usize>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub peaks: PeakConfig,
    pub xlingual: XlingualConfig,
    pub paths: Paths,
    pub half: Option<Half>,
    pub resume: bool,
    pub dump_matrices: bool,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| VgsError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| VgsError::config(path.display().to_string(), e.to_string()))
    }

    pub fn require<'a>(&self, value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| VgsError::config(flag, "required (flag or config file)"))
    }

    /// Writes `resolved_config.json` into `dir`.
    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| VgsError::io(dir, e))?;
        let path = dir.join("resolved_config.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .map_err(|e| VgsError::io(&path, e))
    }
}
