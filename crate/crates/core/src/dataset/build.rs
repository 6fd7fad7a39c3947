use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::split::{SampleRecord, Split, SplitPlan};
use super::DatasetError;
use crate::dsp::{
    fit_norm_stats, normalize_patch, write_cache, write_stats, CacheEntry, DspError, DspParams, FeatureCache,
    FrontEnd, LogMelPatch, NormStats,
};

pub const STATS_FILE: &str = "norm.tmbs";

pub fn cache_file_name(split: Split) -> String {
    format!("{split}.tmbf")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedFile {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct CacheSummary {
    pub written: Vec<(Split, PathBuf, usize)>,
    pub stats_path: PathBuf,
    pub stats: NormStats,
    /// Files without a detectable onset.
    pub no_onset: Vec<String>,
    /// Files that failed to decode or process.
    pub failed: Vec<SkippedFile>,
}

/// Extracts patches for every record, fits statistics on the training split
/// and writes one normalized cache per split plus the statistics sidecar.
///
/// Per-file failures are logged and reported in the summary. Extraction
/// runs on the current rayon pool; output order follows the plan.
pub fn build_cache(
    plan: &SplitPlan,
    root: &Path,
    params: &DspParams,
    out_dir: &Path,
) -> Result<CacheSummary, DatasetError> {
    let front = FrontEnd::new(*params)?;
    let results: Vec<(&SampleRecord, Result<LogMelPatch, DspError>)> = plan
        .records
        .par_iter()
        .map(|r| (r, front.patch_from_file(&root.join(&r.path))))
        .collect();

    let mut no_onset = Vec::new();
    let mut failed = Vec::new();
    let mut ok: Vec<(&SampleRecord, LogMelPatch)> = Vec::new();
    for (r, res) in results {
        match res {
            Ok(p) => ok.push((r, p)),
            Err(DspError::NoOnset) => {
                log::warn!("{}: no onset above threshold, excluded", r.path);
                no_onset.push(r.path.clone());
            }
            Err(e) => {
                log::warn!("{}: {e}", r.path);
                failed.push(SkippedFile {
                    path: r.path.clone(),
                    reason: e.to_string(),
                });
            }
        }
    }
    if !no_onset.is_empty() || !failed.is_empty() {
        log::info!("excluded {} silent and {} unreadable files", no_onset.len(), failed.len());
    }

    let train: Vec<&LogMelPatch> = ok
        .iter()
        .filter(|(r, _)| r.split == Split::Train)
        .map(|(_, p)| p)
        .collect();
    let stats = match fit_norm_stats(train.iter().copied()) {
        Ok(s) => s,
        Err(DspError::EmptyCollection) => return Err(DatasetError::EmptyTrainSplit),
        Err(e) => return Err(e.into()),
    };

    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for split in Split::ALL {
        let mut cache = FeatureCache::new(params.n_mels, params.frames);
        for (r, p) in ok.iter().filter(|(r, _)| r.split == split) {
            cache.entries.push(CacheEntry {
                class_index: r.class_index as u32,
                path: r.path.clone(),
                values: normalize_patch(p, &stats)?.values,
            });
        }
        let path = out_dir.join(cache_file_name(split));
        write_cache(&path, &cache)?;
        log::info!("{split}: {} patches -> {}", cache.len(), path.display());
        written.push((split, path, cache.len()));
    }
    let stats_path = out_dir.join(STATS_FILE);
    write_stats(&stats_path, &stats)?;
    Ok(CacheSummary {
        written,
        stats_path,
        stats,
        no_onset,
        failed,
    })
}
