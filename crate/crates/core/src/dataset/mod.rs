//! Corpus scanning, label mapping, stratified splits and cache building.

mod build;
mod labels;
mod split;

use std::path::PathBuf;

use thiserror::Error;

use crate::dsp::DspError;

pub use build::{build_cache, cache_file_name, CacheSummary, SkippedFile, STATS_FILE};
pub use labels::{parse_label, ClassTable, DEFAULT_ALIASES};
pub use split::{
    make_split, read_manifest, scan, write_manifest, SampleRecord, ScannedFile, Split, SplitPlan,
    SplitRatios,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("malformed sample name (no underscore): {0}")]
    MalformedName(String),
    #[error("no records to split")]
    EmptyDataset,
    #[error("no usable training patches; cannot fit normalization statistics")]
    EmptyTrainSplit,
    #[error("manifest {path}, line {line}: {reason}")]
    Manifest {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("alias table line {line}: {reason}")]
    Alias { line: usize, reason: String },
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
    #[error("walking {path}: {source}")]
    Walk {
        path: PathBuf,
        source: walkdir::Error,
    },
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
