use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::Variant;
use crate::error::Result;

/// State after one completed epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub w_norm_sq: f64,
    pub b: f64,
    pub rho_bar: f64,
    pub r_bar: f64,
    pub train_auc: Option<f64>,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub variant: Variant,
    /// Monitored loss before the first update.
    pub initial_val_loss: f64,
    pub records: Vec<EpochRecord>,
    pub stop_epoch: usize,
    pub stop_reason: StopReason,
}

impl TrainReport {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn epoch(&self, epoch: usize) -> Option<&EpochRecord> {
        self.records.iter().find(|r| r.epoch == epoch)
    }

    /// One CSV line per epoch.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for r in &self.records {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
