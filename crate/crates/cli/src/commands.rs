use std::path::{Path, PathBuf};

use anyhow::Context;
use timbre_core::dataset::{self, ClassTable, Split, DatasetError};
use timbre_core::dsp::{read_cache, FeatureCache};
use timbre_core::eval::{self, export_attention};
use timbre_core::models::{attention_trace, load_checkpoint, Model, ModelKind};
use timbre_core::trainer::{self, default_variants, run_ablation, TrainOptions};

use crate::config::Settings;
use crate::{DataError, UsageError};

const MANIFEST: &str = "manifest.tsv";

fn table(s: &Settings) -> anyhow::Result<ClassTable> {
    Ok(match &s.aliases {
        Some(p) => ClassTable::from_alias_file(p)?,
        None => ClassTable::default(),
    })
}

fn parse_split(name: &str) -> Result<Split, UsageError> {
    name.parse().map_err(UsageError)
}

fn load_cache(s: &Settings, split: Split) -> anyhow::Result<FeatureCache> {
    let path = s.work_dir.join(dataset::cache_file_name(split));
    if !path.exists() {
        return Err(DataError::MissingCache(path).into());
    }
    read_cache(&path).with_context(|| format!("reading {}", path.display()))
}

fn load_model(path: &Path) -> anyhow::Result<Model> {
    if !path.exists() {
        return Err(DataError::MissingCheckpoint(path.to_path_buf()).into());
    }
    let (model, meta) = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
    log::info!("{}: {} (epoch {}, seed {})", path.display(), model.spec.label(), meta.epoch, meta.seed);
    Ok(model)
}

fn checkpoint_path(s: &Settings, explicit: Option<PathBuf>) -> PathBuf {
    explicit.unwrap_or_else(|| s.work_dir.join(format!("{}.tmbc", s.spec.label())))
}

pub fn scan(s: &Settings) -> anyhow::Result<()> {
    let root = s.root()?;
    let table = table(s)?;
    let files = match dataset::scan(root, &table) {
        Ok(f) => f,
        Err(DatasetError::Walk { .. }) => return Err(DataError::EmptyDataset(root.to_path_buf()).into()),
        Err(e) => return Err(e.into()),
    };
    if files.is_empty() {
        return Err(DataError::EmptyDataset(root.to_path_buf()).into());
    }
    let plan = dataset::make_split(&files, s.split, s.seed)?;
    std::fs::create_dir_all(&s.work_dir)?;
    let manifest = s.work_dir.join(MANIFEST);
    dataset::write_manifest(&manifest, &plan.records)?;

    println!("{:<22} {:>7} {:>7} {:>7} {:>7}", "class", "train", "val", "test", "total");
    let mut totals = [0usize; 3];
    for (c, name) in table.names().iter().enumerate() {
        let counts: Vec<usize> = Split::ALL
            .iter()
            .map(|&sp| plan.class_assignments(c, sp).len())
            .collect();
        for (t, n) in totals.iter_mut().zip(&counts) {
            *t += n;
        }
        println!(
            "{name:<22} {:>7} {:>7} {:>7} {:>7}",
            counts[0],
            counts[1],
            counts[2],
            counts.iter().sum::<usize>()
        );
    }
    println!(
        "{:<22} {:>7} {:>7} {:>7} {:>7}",
        "total",
        totals[0],
        totals[1],
        totals[2],
        totals.iter().sum::<usize>()
    );
    println!("manifest: {}", manifest.display());
    Ok(())
}

pub fn preprocess(s: &Settings) -> anyhow::Result<()> {
    let root = s.root()?;
    let manifest = s.work_dir.join(MANIFEST);
    if !manifest.exists() {
        return Err(DataError::MissingManifest(manifest).into());
    }
    let records = dataset::read_manifest(&manifest)?;
    let plan = dataset::SplitPlan {
        ratios: s.split,
        seed: s.seed,
        records,
    };
    let summary = dataset::build_cache(&plan, root, &s.dsp, &s.work_dir)?;
    let counts: Vec<String> = summary.written.iter().map(|(sp, _, n)| format!("{sp} {n}")).collect();
    let cached: usize = summary.written.iter().map(|w| w.2).sum();
    println!(
        "cached {cached} patches ({}); skipped {} files ({} without onset, {} unreadable)",
        counts.join(", "),
        summary.no_onset.len() + summary.failed.len(),
        summary.no_onset.len(),
        summary.failed.len()
    );
    for f in &summary.failed {
        println!("  skipped {}: {}", f.path, f.reason);
    }
    Ok(())
}

pub fn train(s: &Settings) -> anyhow::Result<()> {
    let (train_set, val_set) = (load_cache(s, Split::Train)?, load_cache(s, Split::Val)?);
    std::fs::create_dir_all(&s.work_dir)?;
    let label = s.spec.label();
    let ckpt = checkpoint_path(s, None);
    let opts = TrainOptions {
        checkpoint: Some(ckpt.clone()),
        ..TrainOptions::default()
    };
    let out = trainer::train(s.spec, &train_set, &val_set, &s.train, &opts)?;
    let log_path = s.work_dir.join(format!("{label}.trainlog.csv"));
    out.log.write_csv(&log_path)?;
    println!(
        "{label}: {} epochs, best val loss {:.4} at epoch {}",
        out.log.records.len(),
        out.best_val_loss,
        out.best_epoch
    );
    println!("checkpoint: {}", ckpt.display());
    println!("log: {}", log_path.display());
    Ok(())
}

pub fn eval(s: &Settings, checkpoint: Option<PathBuf>, split: &str) -> anyhow::Result<()> {
    let split = parse_split(split)?;
    let path = checkpoint_path(s, checkpoint);
    let model = load_model(&path)?;
    let cache = load_cache(s, split)?;
    let table = table(s)?;
    let report = eval::evaluate(&model, &cache, table.names())?;
    let stem = path.file_stem().and_then(|n| n.to_str()).unwrap_or("model");
    std::fs::create_dir_all(&s.work_dir)?;
    let json = s.work_dir.join(format!("{stem}.{split}.report.json"));
    let csv = s.work_dir.join(format!("{stem}.{split}.confusion.csv"));
    report.write_json(&json)?;
    report.confusion.write_csv(&csv, table.names())?;
    println!(
        "{stem} on {split} ({} samples): loss {:.4}  P {:.4}  R {:.4}  F1 {:.4}",
        report.n_samples, report.loss, report.weighted.precision, report.weighted.recall, report.weighted.f1
    );
    println!("report: {}", json.display());
    println!("confusion: {}", csv.display());
    Ok(())
}

pub fn ablate(s: &Settings) -> anyhow::Result<()> {
    let train_set = load_cache(s, Split::Train)?;
    let val_set = load_cache(s, Split::Val)?;
    let test_set = load_cache(s, Split::Test)?;
    let table = table(s)?;
    let dir = s.work_dir.join("ablation");
    std::fs::create_dir_all(&dir)?;
    let (report, _) = run_ablation(
        &default_variants(),
        &train_set,
        &val_set,
        &test_set,
        &s.train,
        table.names(),
        Some(&dir),
    )?;
    let csv = s.work_dir.join("ablation.csv");
    std::fs::write(&csv, report.to_csv())?;
    print!("{}", report.to_table());
    println!("table: {}", csv.display());
    Ok(())
}

fn stem_of(path: &str) -> &str {
    let name = path.rsplit('/').next().unwrap_or(path);
    match name.rfind('.') {
        Some(i) if i > 0 => &name[..i],
        _ => name,
    }
}

pub fn attend(s: &Settings, checkpoint: Option<PathBuf>, sample: &str) -> anyhow::Result<()> {
    let model = load_model(&checkpoint_path(s, checkpoint))?;
    if model.spec.kind != ModelKind::FreqAttention {
        return Err(UsageError(format!("{} has no attention layer", model.spec.label())).into());
    }
    let wanted = stem_of(sample);
    let mut found = None;
    for split in Split::ALL {
        let path = s.work_dir.join(dataset::cache_file_name(split));
        if !path.exists() {
            continue;
        }
        let cache = read_cache(&path)?;
        if let Some(e) = cache.entries.into_iter().find(|e| stem_of(&e.path) == wanted) {
            found = Some(e);
            break;
        }
    }
    let entry = found.ok_or_else(|| DataError::UnknownSample(sample.to_string()))?;
    let trace = attention_trace(&model, &entry.values)?;
    let dir = s.work_dir.join("attention");
    let files = export_attention(&trace, &entry.values, model.spec.n_mels, &dir, wanted)?;
    println!("{}: {} heads, {} files in {}", entry.path, trace.heads(), files.len(), dir.display());
    Ok(())
}
