//! Confusion matrices, precision/recall/F1 and attention-map export.

mod attention;

use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::FeatureCache;
use crate::models::{batch_tensor, Model, ModelError};

pub use attention::{activation_map, export_attention, read_csv_matrix, write_csv_matrix};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{preds} predictions for {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("class index {index} outside 0..{classes}")]
    IndexOutOfRange { index: usize, classes: usize },
    #[error("total support is zero")]
    ZeroTotalSupport,
    #[error("nothing to evaluate")]
    EmptyInput,
    #[error("bad matrix file: {0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.trace() as f64 / n as f64,
        }
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn col_sum(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }

    /// Elementwise sum, for merging partial results.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    /// CSV with a class-name header row and a class-name first column.
    pub fn write_csv(&self, path: &Path, names: &[&str]) -> Result<(), EvalError> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        write!(w, "true\\pred")?;
        for n in names.iter().take(self.classes()) {
            write!(w, ",{n}")?;
        }
        writeln!(w)?;
        for (i, row) in self.counts.iter().enumerate() {
            write!(w, "{}", names.get(i).copied().unwrap_or("?"))?;
            for c in row {
                write!(w, ",{c}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn confusion(preds: &[usize], labels: &[usize], classes: usize) -> Result<ConfusionMatrix, EvalError> {
    if preds.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    let mut cm = ConfusionMatrix::new(classes);
    for (&p, &t) in preds.iter().zip(labels) {
        for index in [p, t] {
            if index >= classes {
                return Err(EvalError::IndexOutOfRange { index, classes });
            }
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1 per class. Vanishing denominators give 0.
pub fn per_class_metrics(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    (0..cm.classes())
        .map(|c| {
            let tp = cm.counts[c][c];
            let precision = ratio(tp, cm.col_sum(c));
            let recall = ratio(tp, cm.row_sum(c));
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support: cm.row_sum(c),
            }
        })
        .collect()
}

/// Support-weighted means of the per-class values.
pub fn weighted_average(per_class: &[ClassMetrics]) -> Result<WeightedMetrics, EvalError> {
    let total: u64 = per_class.iter().map(|m| m.support).sum();
    if total == 0 {
        return Err(EvalError::ZeroTotalSupport);
    }
    let avg = |f: fn(&ClassMetrics) -> f64| {
        per_class.iter().map(|m| m.support as f64 * f(m)).sum::<f64>() / total as f64
    };
    Ok(WeightedMetrics {
        precision: avg(|m| m.precision),
        recall: avg(|m| m.recall),
        f1: avg(|m| m.f1),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClassRow {
    pub class: String,
    #[serde(flatten)]
    pub metrics: ClassMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_samples: usize,
    /// Mean cross-entropy.
    pub loss: f64,
    pub weighted: WeightedMetrics,
    pub per_class: Vec<PerClassRow>,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn from_predictions(
        preds: &[usize],
        labels: &[usize],
        loss: f64,
        names: &[&str],
    ) -> Result<Self, EvalError> {
        let cm = confusion(preds, labels, names.len())?;
        let per = per_class_metrics(&cm);
        let weighted = weighted_average(&per)?;
        Ok(Self {
            n_samples: preds.len(),
            loss,
            weighted,
            per_class: names
                .iter()
                .zip(per)
                .map(|(n, metrics)| PerClassRow {
                    class: n.to_string(),
                    metrics,
                })
                .collect(),
            confusion: cm,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<(), EvalError> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self, EvalError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Predictions and per-sample losses over a cache.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub preds: Vec<usize>,
    pub labels: Vec<usize>,
    pub losses: Vec<f64>,
}

impl Predictions {
    pub fn mean_loss(&self) -> f64 {
        self.losses.iter().sum::<f64>() / self.losses.len().max(1) as f64
    }
}

const EVAL_BATCH: usize = 64;

/// Runs the model over every entry. Batches run in parallel on the current
/// rayon pool; results keep cache order.
pub fn predict(model: &Model, cache: &FeatureCache) -> Result<Predictions, EvalError> {
    if cache.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let labels = cache.labels();
    for &index in &labels {
        if index >= model.spec.n_classes {
            return Err(EvalError::IndexOutOfRange {
                index,
                classes: model.spec.n_classes,
            });
        }
    }
    let chunks: Vec<(Vec<usize>, Vec<f64>)> = cache
        .entries
        .par_chunks(EVAL_BATCH)
        .map(|chunk| -> Result<_, EvalError> {
            let views: Vec<&[f32]> = chunk.iter().map(|e| e.values.as_slice()).collect();
            let batch = batch_tensor(&views, cache.n_mels, cache.n_frames).map_err(ModelError::from)?;
            let logits = model.logits(&batch)?;
            let c = model.spec.n_classes;
            let mut preds = Vec::with_capacity(chunk.len());
            let mut losses = Vec::with_capacity(chunk.len());
            for (row, e) in logits.data().chunks(c).zip(chunk) {
                preds.push(argmax(row));
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
                losses.push(lse - row[e.class_index as usize]);
            }
            Ok((preds, losses))
        })
        .collect::<Result<_, _>>()?;
    let (mut preds, mut losses) = (Vec::new(), Vec::new());
    for (p, l) in chunks {
        preds.extend(p);
        losses.extend(l);
    }
    Ok(Predictions { preds, labels, losses })
}

pub fn evaluate(model: &Model, cache: &FeatureCache, names: &[&str]) -> Result<EvalReport, EvalError> {
    let p = predict(model, cache)?;
    EvalReport::from_predictions(&p.preds, &p.labels, p.mean_loss(), names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn embed(small: &[[u64; 2]; 2]) -> ConfusionMatrix {
        let mut cm = ConfusionMatrix::new(20);
        for (i, row) in small.iter().enumerate() {
            cm.counts[i][..2].copy_from_slice(row);
        }
        cm
    }

    #[test]
    fn toy_two_class_metrics() {
        let m = per_class_metrics(&embed(&[[8, 2], [1, 9]]));
        assert!((m[0].precision - 8.0 / 9.0).abs() < 1e-12);
        assert!((m[0].recall - 0.8).abs() < 1e-12);
        let p: f64 = 8.0 / 9.0;
        assert!((m[0].f1 - 2.0 * p * 0.8 / (p + 0.8)).abs() < 1e-12);
        assert!((m[0].f1 - 0.842_105_263_157_894_7).abs() < 1e-12);
        assert_eq!(m[0].support, 10);
        // absent classes
        assert_eq!((m[7].precision, m[7].recall, m[7].f1, m[7].support), (0.0, 0.0, 0.0, 0));
    }

    #[test]
    fn single_and_perfect_predictions() {
        let cm = confusion(&[3], &[0], 20).unwrap();
        assert_eq!(cm.counts[0][3], 1);
        assert_eq!(cm.total(), 1);
        let labels: Vec<usize> = (0..60).map(|i| i % 20).collect();
        let cm = confusion(&labels, &labels, 20).unwrap();
        for c in 0..20 {
            assert_eq!(cm.counts[c][c], 3);
            assert_eq!(cm.row_sum(c), 3);
        }
        assert!(per_class_metrics(&cm).iter().all(|m| m.f1 == 1.0));
    }

    #[test]
    fn confusion_errors() {
        assert!(matches!(confusion(&[0, 1], &[0], 20), Err(EvalError::LengthMismatch { .. })));
        assert!(matches!(confusion(&[20], &[0], 20), Err(EvalError::IndexOutOfRange { index: 20, .. })));
        assert!(matches!(confusion(&[0], &[25], 20), Err(EvalError::IndexOutOfRange { index: 25, .. })));
    }

    #[test]
    fn weighted_cases() {
        let m = |f1, support| ClassMetrics {
            precision: f1,
            recall: f1,
            f1,
            support,
        };
        assert!((weighted_average(&[m(1.0, 1), m(0.0, 3)]).unwrap().f1 - 0.25).abs() < 1e-12);
        let w = weighted_average(&[m(0.5, 1), m(0.5, 17), m(0.5, 4)]).unwrap();
        assert!((w.f1 - 0.5).abs() < 1e-12);
        assert!(matches!(weighted_average(&[m(0.3, 0)]), Err(EvalError::ZeroTotalSupport)));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
        assert_eq!(argmax(&[-1.0, -0.5, -2.0]), 1);
    }

    #[test]
    fn weighted_recall_is_accuracy_and_permutation_invariant() {
        let mut rng = Rng::new(11);
        for _ in 0..50 {
            let n = 1 + rng.below(300);
            let labels: Vec<usize> = (0..n).map(|_| rng.below(20)).collect();
            let preds: Vec<usize> = (0..n).map(|_| rng.below(20)).collect();
            let cm = confusion(&preds, &labels, 20).unwrap();
            let w = weighted_average(&per_class_metrics(&cm)).unwrap();
            assert!((w.recall - cm.accuracy()).abs() < 1e-12);

            let mut perm: Vec<usize> = (0..20).collect();
            rng.shuffle(&mut perm);
            let pl: Vec<usize> = labels.iter().map(|&c| perm[c]).collect();
            let pp: Vec<usize> = preds.iter().map(|&c| perm[c]).collect();
            let cm2 = confusion(&pp, &pl, 20).unwrap();
            let (m1, m2) = (per_class_metrics(&cm), per_class_metrics(&cm2));
            for c in 0..20 {
                assert_eq!(m1[c], m2[perm[c]]);
            }
            let w2 = weighted_average(&m2).unwrap();
            assert!((w.f1 - w2.f1).abs() < 1e-12 && (w.precision - w2.precision).abs() < 1e-12);
        }
    }

    #[test]
    fn report_json_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        let names = crate::dataset::ClassTable::default().names();
        let r = EvalReport::from_predictions(&[0, 1, 1, 19], &[0, 1, 2, 19], 1.25, names).unwrap();
        let p = dir.path().join("r.json");
        r.write_json(&p).unwrap();
        assert_eq!(EvalReport::read_json(&p).unwrap(), r);
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(v["per_class"][3]["class"], "double-bass");
        assert_eq!(v["per_class"][1]["support"], 1);
        assert_eq!(v["per_class"].as_array().unwrap().len(), 20);

        let c = dir.path().join("cm.csv");
        r.confusion.write_csv(&c, names).unwrap();
        let text = std::fs::read_to_string(&c).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 21);
        assert!(lines[0].starts_with("true\\pred,violin,viola,cello"));
        assert!(lines[3].starts_with("cello,0,1,0"));
    }
}
