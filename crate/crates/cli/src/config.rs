use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use timbre_core::dataset::SplitRatios;
use timbre_core::{DspParams, ModelSpec, TrainConfig};

use crate::UsageError;

pub const DEFAULT_WORK_DIR: &str = "work";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelArg {
    Attention,
    Fc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelArg,
    pub heads: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelArg::Attention,
            heads: 8,
        }
    }
}

/// Contents of a `--config` JSON file. Every field is optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset_root: Option<PathBuf>,
    pub work_dir: Option<PathBuf>,
    /// Alias table replacing the bundled one.
    pub aliases: Option<PathBuf>,
    pub seed: Option<u64>,
    pub split: SplitRatios,
    pub dsp: DspParams,
    pub train: TrainConfig,
    pub model: ModelConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
    }
}

/// Command-line values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub root: Option<PathBuf>,
    pub work_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub model: Option<ModelArg>,
    pub heads: Option<usize>,
    pub epochs: Option<usize>,
    pub patience: Option<usize>,
}

/// Fully resolved settings: flags, then file, then defaults.
#[derive(Debug, Clone)]
pub struct Settings {
    pub root: Option<PathBuf>,
    pub work_dir: PathBuf,
    pub aliases: Option<PathBuf>,
    pub seed: u64,
    pub split: SplitRatios,
    pub dsp: DspParams,
    pub train: TrainConfig,
    pub spec: ModelSpec,
}

impl Settings {
    pub fn resolve(file: RunConfig, flags: Overrides, env_work_dir: Option<PathBuf>) -> Result<Self, UsageError> {
        let seed = flags.seed.or(file.seed).unwrap_or(file.train.seed);
        let mut train = file.train;
        train.seed = seed;
        if let Some(e) = flags.epochs {
            train.max_epochs = e;
        }
        if let Some(p) = flags.patience {
            train.patience = p;
        }
        let kind = flags.model.unwrap_or(file.model.kind);
        let heads = flags.heads.unwrap_or(file.model.heads);
        let spec = match kind {
            ModelArg::Attention => ModelSpec::attention(heads),
            ModelArg::Fc => ModelSpec::fc(),
        };
        spec.validate().map_err(|e| UsageError(e.to_string()))?;
        train.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(Self {
            root: flags.root.or(file.dataset_root),
            work_dir: flags
                .work_dir
                .or(file.work_dir)
                .or(env_work_dir)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_WORK_DIR)),
            aliases: file.aliases,
            seed,
            split: file.split,
            dsp: file.dsp,
            train,
            spec,
        })
    }

    pub fn root(&self) -> Result<&Path, UsageError> {
        self.root
            .as_deref()
            .ok_or_else(|| UsageError("no dataset root: pass --root or set dataset_root in the config".into()))
    }
}
