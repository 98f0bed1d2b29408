use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::{EpochRecord, TrainConfig, TrainState};
use super::GnnError;

pub const CURVES_CSV_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc";

/// Training state plus the configuration it was produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub state: TrainState,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String, GnnError> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| GnnError::Checkpoint(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self, GnnError> {
        serde_json::from_str(s).map_err(|e| GnnError::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), GnnError> {
        std::fs::write(path, self.to_json()?).map_err(|e| GnnError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, GnnError> {
        let s = std::fs::read_to_string(path).map_err(|e| GnnError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }
}

/// One row per epoch. Floats use the shortest exact representation.
pub fn curves_csv(curve: &[EpochRecord]) -> String {
    let mut out = String::from(CURVES_CSV_HEADER);
    out.push('\n');
    for r in curve {
        let _ = writeln!(out, "{},{},{},{},{}", r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc);
    }
    out
}

pub fn parse_curves_csv(s: &str) -> Result<Vec<EpochRecord>, GnnError> {
    let bad = |line: usize, why: &str| GnnError::Checkpoint(format!("curves line {line}: {why}"));
    let mut lines = s.lines();
    if lines.next() != Some(CURVES_CSV_HEADER) {
        return Err(bad(1, "unexpected header"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad(i + 2, "expected 5 fields"));
            }
            let num = |j: usize| f[j].parse::<f64>().map_err(|_| bad(i + 2, "bad number"));
            Ok(EpochRecord {
                epoch: f[0].parse().map_err(|_| bad(i + 2, "bad epoch"))?,
                train_loss: num(1)?,
                train_acc: num(2)?,
                val_loss: num(3)?,
                val_acc: num(4)?,
            })
        })
        .collect()
}
