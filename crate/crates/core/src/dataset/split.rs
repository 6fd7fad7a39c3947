use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::labels::{parse_label, ClassTable};
use super::DatasetError;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// A labelled file before split assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScannedFile {
    /// Relative to the corpus root, `/`-separated.
    pub path: String,
    pub instrument_raw: String,
    pub class_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    pub path: String,
    pub instrument_raw: String,
    pub class_index: usize,
    pub split: Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.70,
            val: 0.10,
            test: 0.20,
        }
    }
}

impl SplitRatios {
    fn validate(&self) -> Result<(), DatasetError> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !(0.0..=1.0).contains(r)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DatasetError::InvalidRatios(format!("{self:?}")));
        }
        Ok(())
    }

    /// Train/val/test sizes for a class with `n` records.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let train = ((n as f64 * self.train).round() as usize).min(n);
        let val = ((n as f64 * self.val).round() as usize).min(n - train);
        (train, val, n - train - val)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub ratios: SplitRatios,
    pub seed: u64,
    /// Sorted by path.
    pub records: Vec<SampleRecord>,
}

impl SplitPlan {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    /// Paths assigned to `split` within one class, sorted.
    pub fn class_assignments(&self, class_index: usize, split: Split) -> Vec<&str> {
        self.split(split)
            .filter(|r| r.class_index == class_index)
            .map(|r| r.path.as_str())
            .collect()
    }
}

/// Walks `root` for `.wav` files and labels each one.
///
/// Files whose names carry no instrument token are logged and skipped.
pub fn scan(root: &Path, table: &ClassTable) -> Result<Vec<ScannedFile>, DatasetError> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(root).follow_links(true) {
        let entry = entry.map_err(|source| DatasetError::Walk {
            path: root.to_path_buf(),
            source,
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let is_wav = entry
            .path()
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if !is_wav {
            continue;
        }
        let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
        let rel = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        match parse_label(&rel) {
            Ok(instrument) => out.push(ScannedFile {
                class_index: table.map_class(&instrument),
                instrument_raw: instrument,
                path: rel,
            }),
            Err(e) => log::warn!("skipping {rel}: {e}"),
        }
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

/// Stratified split: each class is shuffled with its own stream and cut
/// proportionally.
pub fn make_split(files: &[ScannedFile], ratios: SplitRatios, seed: u64) -> Result<SplitPlan, DatasetError> {
    if files.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    ratios.validate()?;
    let mut by_class: BTreeMap<usize, Vec<&ScannedFile>> = BTreeMap::new();
    for f in files {
        by_class.entry(f.class_index).or_default().push(f);
    }
    let mut records = Vec::with_capacity(files.len());
    for (class, mut group) in by_class {
        group.sort_by(|a, b| a.path.cmp(&b.path));
        Rng::derive(seed, class as u64).shuffle(&mut group);
        let (n_train, n_val, _) = ratios.sizes(group.len());
        for (i, f) in group.into_iter().enumerate() {
            let split = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            records.push(SampleRecord {
                path: f.path.clone(),
                instrument_raw: f.instrument_raw.clone(),
                class_index: f.class_index,
                split,
            });
        }
    }
    records.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(SplitPlan { ratios, seed, records })
}

/// One `<split>\t<class_index>\t<relative_path>` line per record, sorted by path.
pub fn write_manifest(path: &Path, records: &[SampleRecord]) -> Result<(), DatasetError> {
    let mut sorted: Vec<&SampleRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.path.cmp(&b.path));
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for r in sorted {
        writeln!(w, "{}\t{}\t{}", r.split, r.class_index, r.path)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<SampleRecord>, DatasetError> {
    let text = std::fs::read_to_string(path)?;
    let err = |line: usize, reason: String| DatasetError::Manifest {
        path: PathBuf::from(path),
        line,
        reason,
    };
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (Some(split), Some(class), Some(rel)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(err(i + 1, "expected three tab-separated fields".into()));
        };
        let split = split.parse::<Split>().map_err(|e| err(i + 1, e))?;
        let class_index: usize = class
            .parse()
            .ok()
            .filter(|&c| c < crate::N_CLASSES)
            .ok_or_else(|| err(i + 1, format!("bad class index {class:?}")))?;
        let instrument_raw = parse_label(rel).map_err(|e| err(i + 1, e.to_string()))?;
        records.push(SampleRecord {
            path: rel.to_string(),
            instrument_raw,
            class_index,
            split,
        });
    }
    Ok(records)
}
