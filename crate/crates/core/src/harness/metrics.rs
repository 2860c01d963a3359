//! Metrics file: one JSON object per line, tagged by `type`.
//!
//! ```text
//! {"type":"epoch","phase":"pretrain"|"train","epoch":0,"domain":0,"train_loss":..,"val_mse":..,"improved":true}
//! {"type":"final","domain":0,"best_epoch":3,"best_val_mse":..,"test_mse":..,"per_head_accuracy":[..]}
//! {"type":"summary","variant":"ver5","seed":7,"alpha":0.1,"dr":0.5,"horizon":0,"config_hash":"..",
//!  "split_hash":"..","rounds":12,"client_rounds":[..],"client_shares":[..],"pool_versions":[..]}
//! ```
//!
//! Wall time is kept out of this file so identical runs produce identical
//! bytes; it goes to `timing.json` next to it.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Train,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochRecord {
    pub phase: Phase,
    /// Global epoch index; pretraining epochs come first.
    pub epoch: usize,
    pub domain: usize,
    /// Mean training MSE over the epoch's batches (pre-update).
    pub train_loss: f64,
    pub val_mse: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinalRecord {
    pub domain: usize,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub test_mse: f64,
    pub per_head_accuracy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub variant: String,
    pub seed: u64,
    pub alpha: f64,
    pub dr: f64,
    pub horizon: usize,
    pub config_hash: String,
    pub split_hash: String,
    /// Federated rounds on the shared clock.
    pub rounds: u64,
    /// Rounds each client took part in.
    pub client_rounds: Vec<u64>,
    /// Rounds in which each client's share went through.
    pub client_shares: Vec<u64>,
    /// Latest pool version of each client's entries (0 if never shared).
    pub pool_versions: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MetricsLine {
    Epoch(EpochRecord),
    Final(FinalRecord),
    Summary(RunSummary),
}

/// All metrics of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub epochs: Vec<EpochRecord>,
    pub finals: Vec<FinalRecord>,
    pub summary: RunSummary,
    pub wall_time_s: f64,
}

impl MetricsRecord {
    pub fn lines(&self) -> Vec<MetricsLine> {
        self.epochs
            .iter()
            .cloned()
            .map(MetricsLine::Epoch)
            .chain(self.finals.iter().cloned().map(MetricsLine::Final))
            .chain(std::iter::once(MetricsLine::Summary(self.summary.clone())))
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for line in self.lines() {
            out.push_str(&serde_json::to_string(&line).expect("metrics serialize"));
            out.push('\n');
        }
        out
    }

    /// Appends this record's lines to `path`.
    pub fn append_to(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        f.write_all(self.to_jsonl().as_bytes())?;
        Ok(())
    }

    pub fn test_mse(&self) -> Vec<f64> {
        self.finals.iter().map(|f| f.test_mse).collect()
    }

    pub fn val_curve(&self, domain: usize) -> Vec<f64> {
        self.epochs
            .iter()
            .filter(|e| e.domain == domain)
            .map(|e| e.val_mse)
            .collect()
    }
}

/// Parses a metrics file, rejecting lines that do not match the schema.
pub fn parse_jsonl(text: &str) -> Result<Vec<MetricsLine>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                file: "metrics.jsonl".into(),
                line: n as u64 + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}
