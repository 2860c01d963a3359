//! Time-series ingestion and sample preparation.
//!
//! A run is one experiment: `NF` feature rows and one label row of equal
//! length. Runs are split whole into train/validation/test, features are
//! z-scored with training statistics, and each label gets a `NF x W` window
//! of the preceding feature values plus the up/not-up category of every
//! feature at the label time.

mod batch;
mod csv_io;
mod synthetic;

pub use batch::{batch_indices, batch_iter, BatchOrder, Batches};
pub use csv_io::{ingest_csv, ingest_runs, write_csv, CsvSchema};
pub use synthetic::{generate_synthetic, Mixing, SyntheticDomain, SyntheticSpec};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;

pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct RawRun {
    pub domain: usize,
    pub run_id: String,
    /// `features[i][t]` is feature `i` at time `t`.
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
    pub feature_names: Vec<String>,
}

impl RawRun {
    pub fn nf(&self) -> usize {
        self.features.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_names.len() != self.nf() {
            return Err(Error::Data(format!(
                "run {}: {} feature names for {} features",
                self.run_id,
                self.feature_names.len(),
                self.nf()
            )));
        }
        for (i, row) in self.features.iter().enumerate() {
            if row.len() != self.len() {
                return Err(Error::Data(format!(
                    "run {}: feature {} has {} steps, labels have {}",
                    self.run_id,
                    i,
                    row.len(),
                    self.len()
                )));
            }
        }
        let finite = self
            .features
            .iter()
            .flatten()
            .chain(&self.labels)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Data(format!("run {}: non-finite value", self.run_id)));
        }
        Ok(())
    }
}

/// Up/not-up category of one feature row: `+1` iff the value strictly
/// increased from the previous step. Index 0 has no predecessor and is `-1`.
pub fn pre_classify_row(row: &[f64]) -> Vec<i8> {
    let mut out = Vec::with_capacity(row.len());
    if !row.is_empty() {
        out.push(-1);
    }
    out.extend(row.windows(2).map(|w| if w[1] > w[0] { 1 } else { -1 }));
    out
}

pub fn pre_classify(run: &RawRun) -> Vec<Vec<i8>> {
    run.features.iter().map(|r| pre_classify_row(r)).collect()
}

/// Per-feature z-score statistics fit on training runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn fit(runs: &[&RawRun]) -> Result<Self> {
        let first = runs
            .first()
            .ok_or_else(|| Error::Data("cannot fit normalizer on zero runs".into()))?;
        let nf = first.nf();
        if runs.iter().any(|r| r.nf() != nf) {
            return Err(Error::Data("runs disagree on feature count".into()));
        }
        let mut mean = vec![0.0; nf];
        let mut std = vec![0.0; nf];
        for i in 0..nf {
            let n: usize = runs.iter().map(|r| r.features[i].len()).sum();
            if n == 0 {
                return Err(Error::Data("cannot fit normalizer on empty runs".into()));
            }
            let values = || runs.iter().flat_map(|r| &r.features[i]);
            let first = *values().next().expect("n > 0");
            let m = if values().all(|&v| v == first) {
                first
            } else {
                values().sum::<f64>() / n as f64
            };
            let var = values().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            mean[i] = m;
            std[i] = var.sqrt().max(STD_FLOOR);
        }
        Ok(Normalizer { mean, std })
    }

    pub fn nf(&self) -> usize {
        self.mean.len()
    }

    #[inline]
    pub fn apply(&self, feature: usize, v: f64) -> f64 {
        (v - self.mean[feature]) / self.std[feature]
    }

    #[inline]
    pub fn invert(&self, feature: usize, z: f64) -> f64 {
        z * self.std[feature] + self.mean[feature]
    }
}

/// One training sample: the standardized window, the categories at the
/// label time, and the raw-scale label.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    /// `NF x W`; row `i` is feature `i` over `t-W .. t-1`.
    pub x: Matrix,
    pub c: Vec<i8>,
    pub y: f64,
    pub t_index: usize,
}

impl FeatureTensor {
    pub fn nf(&self) -> usize {
        self.x.rows()
    }

    pub fn window(&self) -> usize {
        self.x.cols()
    }
}

/// Windows a run into samples for `t` in `W ..= T - 1 - horizon`; the sample
/// at `t` targets the label at `t + horizon`.
pub fn window(run: &RawRun, w: usize, horizon: usize, norm: &Normalizer) -> Result<Vec<FeatureTensor>> {
    if w == 0 {
        return Err(Error::Data("window size must be at least 1".into()));
    }
    if norm.nf() != run.nf() {
        return Err(Error::Shape(format!(
            "normalizer has {} features, run {} has {}",
            norm.nf(),
            run.run_id,
            run.nf()
        )));
    }
    let need = w + horizon + 1;
    if run.len() < need {
        return Err(Error::RunTooShort {
            run_id: run.run_id.clone(),
            len: run.len(),
            need,
        });
    }
    let cats = pre_classify(run);
    let nf = run.nf();
    let samples = (w..run.len() - horizon)
        .map(|t| {
            let mut x = Matrix::zeros(nf, w);
            for i in 0..nf {
                for (slot, &v) in x.row_mut(i).iter_mut().zip(&run.features[i][t - w..t]) {
                    *slot = norm.apply(i, v);
                }
            }
            FeatureTensor {
                x,
                c: cats.iter().map(|row| row[t]).collect(),
                y: run.labels[t + horizon],
                t_index: t,
            }
        })
        .collect();
    Ok(samples)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_runs: Vec<String>,
    pub val_runs: Vec<String>,
    pub test_runs: Vec<String>,
}

impl SplitSpec {
    /// Splits run ids 60/20/20 by count after a seeded shuffle. Validation and
    /// test each get `round(0.2 n)` runs (halves round down, minimum one) and
    /// training keeps the remainder.
    pub fn by_runs(run_ids: &[String], seed: u64) -> Result<Self> {
        let n = run_ids.len();
        if n < 3 {
            return Err(Error::Data(format!("need at least 3 runs to split, got {n}")));
        }
        let mut ids = run_ids.to_vec();
        ids.shuffle(&mut crate::rng::stream(seed, &[crate::rng::tag::SPLIT]));
        // ceil(x - 0.5) rounds to nearest with exact halves going down
        let held = (((n as f64) * 0.2 - 0.5).ceil() as usize).max(1);
        let test_runs = ids.split_off(n - held);
        let val_runs = ids.split_off(n - 2 * held);
        Ok(SplitSpec {
            train_runs: ids,
            val_runs,
            test_runs,
        })
    }
}
