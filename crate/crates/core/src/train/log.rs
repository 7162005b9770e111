use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One evaluation point of a training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub samples_seen: u64,
    pub step: u64,
    /// Mean training loss over the steps since the previous record; empty
    /// for the record taken before the first update.
    pub train_loss: Option<f64>,
    pub val_loss: f64,
    pub ic_x: f64,
    pub ic_y: f64,
    pub ic_z: f64,
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub records: Vec<MetricsRecord>,
}

impl MetricsLog {
    pub fn push(&mut self, r: MetricsRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if r.samples_seen <= last.samples_seen {
                return Err(Error::InvalidConfig(format!(
                    "metrics must advance: {} after {}",
                    r.samples_seen, last.samples_seen
                )));
            }
        }
        self.records.push(r);
        Ok(())
    }

    pub fn last(&self) -> Option<&MetricsRecord> {
        self.records.last()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("csv.tmp");
        {
            let mut w = csv::Writer::from_path(&tmp)?;
            for r in &self.records {
                w.serialize(r)?;
            }
            if self.records.is_empty() {
                w.write_record(["samples_seen", "step", "train_loss", "val_loss", "ic_x", "ic_y", "ic_z", "lr", "seconds"])?;
            }
            w.flush()?;
        }
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut log = MetricsLog::default();
        for r in rdr.deserialize() {
            log.push(r?)?;
        }
        Ok(log)
    }
}
