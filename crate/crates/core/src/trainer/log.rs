use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_f1: f64,
    /// Wall-clock time of the epoch.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub const HEADER: &'static str = "epoch,train_loss,val_loss,val_f1,seconds";

    /// Equal losses and scores, ignoring timings.
    pub fn same_trajectory(&self, other: &TrainLog) -> bool {
        self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.epoch == b.epoch && a.train_loss == b.train_loss && a.val_loss == b.val_loss && a.val_f1 == b.val_f1
            })
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::HEADER);
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{:.3}\n",
                r.epoch, r.train_loss, r.val_loss, r.val_f1, r.seconds
            ));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        w.write_all(self.to_csv().as_bytes())?;
        w.flush()
    }

    pub fn parse_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        if lines.next() != Some(Self::HEADER) {
            return Err("missing train log header".into());
        }
        let records = lines
            .filter(|l| !l.is_empty())
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                if f.len() != 5 {
                    return Err(format!("bad row {l:?}"));
                }
                let num = |s: &str| s.parse::<f64>().map_err(|e| format!("{s:?}: {e}"));
                Ok(EpochRecord {
                    epoch: f[0].parse().map_err(|e| format!("{:?}: {e}", f[0]))?,
                    train_loss: num(f[1])?,
                    val_loss: num(f[2])?,
                    val_f1: num(f[3])?,
                    seconds: num(f[4])?,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { records })
    }
}
