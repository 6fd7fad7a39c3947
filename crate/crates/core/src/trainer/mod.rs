//! Mini-batch Adam training, early stopping and the head-count ablation.

mod adam;
mod log;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::FeatureCache;
use crate::eval::{self, EvalError, EvalReport};
use crate::models::{batch_tensor, save_checkpoint, CheckpointMeta, Model, ModelError, ModelSpec};
use crate::rng::Rng;

pub use self::adam::{adam_step, OptimizerState};
pub use self::log::{EpochRecord, TrainLog};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{0} cache is empty")]
    EmptyCache(&'static str),
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("cache holds {found}, model expects {expected}")]
    IncompatibleCache { expected: String, found: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub max_epochs: usize,
    /// Epochs without a validation-loss improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            weight_decay: 1e-5,
            batch_size: 16,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            max_epochs: 300,
            patience: 20,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |what: &str| Err(TrainError::InvalidConfig(what.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch_size, max_epochs and patience must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps_adam <= 0.0 {
            return bad("betas must lie in [0, 1) and eps_adam must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Where to write the best-validation checkpoint.
    pub checkpoint: Option<PathBuf>,
    /// Stop once the epoch's mean training loss falls below this.
    pub target_train_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after the last epoch.
    pub last: Model,
    /// Parameters with the lowest validation loss.
    pub best: Model,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub log: TrainLog,
}

fn check_cache(spec: &ModelSpec, cache: &FeatureCache, name: &'static str) -> Result<(), TrainError> {
    if cache.is_empty() {
        return Err(TrainError::EmptyCache(name));
    }
    if cache.n_mels != spec.n_mels || cache.n_frames != spec.n_frames {
        return Err(TrainError::IncompatibleCache {
            expected: format!("{}x{}", spec.n_mels, spec.n_frames),
            found: format!("{}x{}", cache.n_mels, cache.n_frames),
        });
    }
    Ok(())
}

fn class_names(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

/// Loss and weighted F1 of `model` on `cache`.
pub fn validate(model: &Model, cache: &FeatureCache) -> Result<(f64, f64), TrainError> {
    let names = class_names(model.spec.n_classes);
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    let report = eval::evaluate(model, cache, &names)?;
    Ok((report.loss, report.weighted.f1))
}

/// Mean loss of one untrained pass over `cache`, in batches of `batch_size`.
pub fn initial_loss(model: &Model, cache: &FeatureCache) -> Result<f64, TrainError> {
    Ok(eval::predict(model, cache)?.mean_loss())
}

/// Trains a freshly initialized model (seeded by `cfg.seed`).
pub fn train(
    spec: ModelSpec,
    train_set: &FeatureCache,
    val_set: &FeatureCache,
    cfg: &TrainConfig,
    opts: &TrainOptions,
) -> Result<TrainOutcome, TrainError> {
    let model = Model::build(spec, &mut Rng::new(cfg.seed))?;
    train_model(model, train_set, val_set, cfg, opts)
}

/// Trains `model` in place from its current parameters.
pub fn train_model(
    mut model: Model,
    train_set: &FeatureCache,
    val_set: &FeatureCache,
    cfg: &TrainConfig,
    opts: &TrainOptions,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    check_cache(&model.spec, train_set, "training")?;
    check_cache(&model.spec, val_set, "validation")?;
    let labels = train_set.labels();
    if let Some(&bad) = labels.iter().find(|&&c| c >= model.spec.n_classes) {
        return Err(EvalError::IndexOutOfRange {
            index: bad,
            classes: model.spec.n_classes,
        }
        .into());
    }

    model.params.round_to_f32();
    let mut state = OptimizerState::new(&model.params);
    let mut log = TrainLog::default();
    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        order.sort_unstable();
        Rng::derive(cfg.seed, epoch as u64).shuffle(&mut order);
        let mut loss_sum = 0.0;
        for (batch_no, idx) in order.chunks(cfg.batch_size).enumerate() {
            let views: Vec<&[f32]> = idx.iter().map(|&i| train_set.entries[i].values.as_slice()).collect();
            let batch_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let x = batch_tensor(&views, model.spec.n_mels, model.spec.n_frames).map_err(ModelError::from)?;
            let (loss, grads) = model.loss_and_grads(&x, &batch_labels)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: batch_no,
                    loss,
                });
            }
            loss_sum += loss * idx.len() as f64;
            adam_step(&mut model.params, &grads, &mut state, cfg)?;
            model.params.round_to_f32();
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let (val_loss, val_f1) = validate(&model, val_set)?;
        if !val_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch,
                batch: usize::MAX,
                loss: val_loss,
            });
        }
        log.records.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_f1,
            seconds: started.elapsed().as_secs_f64(),
        });
        ::log::debug!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5} f1 {val_f1:.4}");

        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best = model.clone();
            if let Some(path) = &opts.checkpoint {
                save_checkpoint(path, &best, CheckpointMeta { seed: cfg.seed, epoch })?;
            }
        } else if epoch - best_epoch >= cfg.patience {
            ::log::info!("no validation improvement for {} epochs, stopping at {epoch}", cfg.patience);
            break;
        }
        if opts.target_train_loss.is_some_and(|t| train_loss < t) {
            ::log::info!("training loss {train_loss:.5} below target at epoch {epoch}");
            break;
        }
    }
    Ok(TrainOutcome {
        last: model,
        best,
        best_epoch,
        best_val_loss: best_val,
        log,
    })
}

/// One line of the ablation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub model: String,
    pub loss: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,loss,precision,recall,f1,best_epoch\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{}\n",
                r.model, r.loss, r.precision, r.recall, r.f1, r.best_epoch
            ));
        }
        s
    }

    /// Fixed-width text table for terminals.
    pub fn to_table(&self) -> String {
        let mut s = format!("{:<14} {:>7} {:>6} {:>6} {:>6}\n", "model", "loss", "P", "R", "F1");
        for r in &self.rows {
            s.push_str(&format!(
                "{:<14} {:>7.3} {:>6.2} {:>6.2} {:>6.2}\n",
                r.model, r.loss, r.precision, r.recall, r.f1
            ));
        }
        s
    }
}

/// Attention with 1, 8 and 16 heads, then the FC baseline.
pub fn default_variants() -> Vec<ModelSpec> {
    vec![
        ModelSpec::attention(1),
        ModelSpec::attention(8),
        ModelSpec::attention(16),
        ModelSpec::fc(),
    ]
}

/// Trains every variant with the same configuration and scores the best
/// checkpoint of each on `test`. Variants train concurrently; each run is
/// itself sequential, so results do not depend on scheduling.
pub fn run_ablation(
    variants: &[ModelSpec],
    train_set: &FeatureCache,
    val_set: &FeatureCache,
    test_set: &FeatureCache,
    cfg: &TrainConfig,
    names: &[&str],
    checkpoint_dir: Option<&Path>,
) -> Result<(AblationReport, Vec<EvalReport>), TrainError> {
    if test_set.is_empty() {
        return Err(TrainError::EmptyCache("test"));
    }
    let results: Vec<(AblationRow, EvalReport)> = variants
        .par_iter()
        .map(|spec| -> Result<_, TrainError> {
            let opts = TrainOptions {
                checkpoint: checkpoint_dir.map(|d| d.join(format!("{}.tmbc", spec.label()))),
                ..TrainOptions::default()
            };
            let out = train(*spec, train_set, val_set, cfg, &opts)?;
            let report = eval::evaluate(&out.best, test_set, names)?;
            ::log::info!("{}: test F1 {:.4}", spec.label(), report.weighted.f1);
            Ok((
                AblationRow {
                    model: spec.label(),
                    loss: report.loss,
                    precision: report.weighted.precision,
                    recall: report.weighted.recall,
                    f1: report.weighted.f1,
                    best_epoch: out.best_epoch,
                },
                report,
            ))
        })
        .collect::<Result<_, _>>()?;
    let (rows, reports) = results.into_iter().unzip();
    Ok((AblationReport { rows }, reports))
}
