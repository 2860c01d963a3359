//! The per-client multi-head model.
//!
//! Head `i` classifies row `i` of the window into the up/not-up category of
//! feature `i`; the prediction network reads the flattened window
//! concatenated with all head probabilities. Head probabilities enter the
//! predictor as plain inputs, so the MSE never reaches head weights and each
//! of the `1 + NF` networks trains on its own loss with its own Adam state.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{FeatureTensor, Normalizer};
use crate::error::{Error, Result};
use crate::nn::{self, Activation, AdamState, DenseNet, ForwardTrace, Matrix};
use crate::rng;

const HIDDEN: [usize; 4] = [8, 64, 32, 8];
const EVAL_CHUNK: usize = 1024;

pub fn head_dims(window: usize) -> Vec<usize> {
    let mut d = vec![window];
    d.extend(HIDDEN);
    d.push(2);
    d
}

pub fn head_activations() -> Vec<Activation> {
    vec![
        Activation::LeakyRelu,
        Activation::LeakyRelu,
        Activation::LeakyRelu,
        Activation::LeakyRelu,
        Activation::Softmax,
    ]
}

/// `(W + 2) * NF`: the flattened window plus two probabilities per head.
pub fn predictor_input_width(nf: usize, window: usize) -> usize {
    (window + 2) * nf
}

pub fn predictor_dims(nf: usize, window: usize) -> Vec<usize> {
    let mut d = vec![predictor_input_width(nf, window)];
    d.extend(HIDDEN);
    d.push(1);
    d
}

pub fn predictor_activations() -> Vec<Activation> {
    vec![
        Activation::LeakyRelu,
        Activation::LeakyRelu,
        Activation::LeakyRelu,
        Activation::Identity,
        Activation::Identity,
    ]
}

/// What the heads are trained to classify.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HeadTargets {
    /// The pre-classification category of the head's feature.
    #[default]
    PreClassification,
    /// A fixed category for every sample (the no-pre-classification ablation).
    Constant(i8),
}

/// Maps a category to a softmax class index: `+1 -> 0`, `-1 -> 1`.
#[inline]
pub fn class_index(c: i8) -> usize {
    if c == 1 {
        0
    } else {
        1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientModel {
    pub domain: usize,
    pub window: usize,
    pub heads: Vec<DenseNet>,
    pub predictor: DenseNet,
    pub head_opt: Vec<AdamState>,
    pub predictor_opt: AdamState,
    pub normalizer: Normalizer,
    pub head_targets: HeadTargets,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Losses {
    pub heads: Vec<f64>,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput {
    /// `B x 2NF`; columns `2i, 2i+1` are head `i`'s class probabilities.
    pub p: Matrix,
    pub y_hat: Vec<f64>,
    pub head_traces: Vec<ForwardTrace>,
    pub predictor_trace: ForwardTrace,
    pub losses: Losses,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mse: f64,
    pub per_head_accuracy: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    domain: usize,
    nf: usize,
    window: usize,
    head_targets: HeadTargets,
    normalizer: Normalizer,
}

impl ClientModel {
    pub fn new(domain: usize, window: usize, normalizer: Normalizer, lr: f64, seed: u64) -> Result<Self> {
        let nf = normalizer.nf();
        if nf == 0 {
            return Err(Error::Data("client needs at least one feature".into()));
        }
        // every head in every domain starts from the same broadcast weights
        let head = DenseNet::init(
            &head_dims(window),
            &head_activations(),
            rng::derive(seed, &[rng::tag::INIT]),
        )?;
        let heads = vec![head; nf];
        let predictor = DenseNet::init(
            &predictor_dims(nf, window),
            &predictor_activations(),
            rng::derive(seed, &[rng::tag::INIT, domain as u64]),
        )?;
        Ok(Self::from_parts(domain, window, heads, predictor, normalizer, lr))
    }

    fn from_parts(
        domain: usize,
        window: usize,
        heads: Vec<DenseNet>,
        predictor: DenseNet,
        normalizer: Normalizer,
        lr: f64,
    ) -> Self {
        ClientModel {
            domain,
            window,
            head_opt: heads.iter().map(|h| AdamState::new(h, lr)).collect(),
            predictor_opt: AdamState::new(&predictor, lr),
            heads,
            predictor,
            normalizer,
            head_targets: HeadTargets::PreClassification,
        }
    }

    pub fn nf(&self) -> usize {
        self.heads.len()
    }

    pub fn param_count(&self) -> usize {
        self.heads.iter().map(DenseNet::param_count).sum::<usize>() + self.predictor.param_count()
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.head_opt.iter_mut().for_each(|s| s.lr = lr);
        self.predictor_opt.lr = lr;
    }

    fn head_class(&self, c: i8) -> usize {
        match self.head_targets {
            HeadTargets::PreClassification => class_index(c),
            HeadTargets::Constant(k) => class_index(k),
        }
    }

    fn check_batch(&self, batch: &[&FeatureTensor]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        for s in batch {
            if s.nf() != self.nf() || s.window() != self.window || s.c.len() != self.nf() {
                return Err(Error::Shape(format!(
                    "sample has {}x{} features, client {} expects {}x{}",
                    s.nf(),
                    s.window(),
                    self.domain,
                    self.nf(),
                    self.window
                )));
            }
        }
        Ok(())
    }

    /// Head `i`'s input batch: row `i` of every window.
    pub fn head_input(batch: &[&FeatureTensor], i: usize) -> Matrix {
        let w = batch[0].window();
        let mut m = Matrix::zeros(batch.len(), w);
        for (b, s) in batch.iter().enumerate() {
            m.row_mut(b).copy_from_slice(s.x.row(i));
        }
        m
    }

    /// Head `i`'s categories for the batch, before any target override.
    pub fn head_categories(batch: &[&FeatureTensor], i: usize) -> Vec<i8> {
        batch.iter().map(|s| s.c[i]).collect()
    }

    /// Categories actually used as training targets for head `i`.
    pub fn head_target_categories(&self, batch: &[&FeatureTensor], i: usize) -> Vec<i8> {
        match self.head_targets {
            HeadTargets::PreClassification => Self::head_categories(batch, i),
            HeadTargets::Constant(k) => vec![k; batch.len()],
        }
    }

    pub fn forward_client(&self, batch: &[&FeatureTensor]) -> Result<BatchOutput> {
        self.check_batch(batch)?;
        let (nf, w, bsz) = (self.nf(), self.window, batch.len());
        let mut p = Matrix::zeros(bsz, 2 * nf);
        let mut head_traces = Vec::with_capacity(nf);
        let mut head_losses = Vec::with_capacity(nf);
        for (i, head) in self.heads.iter().enumerate() {
            let trace = head.forward(&Self::head_input(batch, i))?;
            let out = trace.output();
            for b in 0..bsz {
                p.row_mut(b)[2 * i..2 * i + 2].copy_from_slice(out.row(b));
            }
            let targets: Vec<usize> = batch.iter().map(|s| self.head_class(s.c[i])).collect();
            head_losses.push(nn::cross_entropy(&trace, &targets)?.loss);
            head_traces.push(trace);
        }
        let mut input = Matrix::zeros(bsz, predictor_input_width(nf, w));
        for (b, s) in batch.iter().enumerate() {
            let row = input.row_mut(b);
            row[..nf * w].copy_from_slice(s.x.as_slice());
            row[nf * w..].copy_from_slice(p.row(b));
        }
        let predictor_trace = self.predictor.forward(&input)?;
        let y_hat = predictor_trace.output().col(0);
        let y: Vec<f64> = batch.iter().map(|s| s.y).collect();
        let mse = nn::mse(&y_hat, &y)?.loss;
        Ok(BatchOutput {
            p,
            y_hat,
            head_traces,
            predictor_trace,
            losses: Losses {
                heads: head_losses,
                mse,
            },
        })
    }

    /// One Adam step for every head on its cross-entropy and for the
    /// predictor on the MSE. Returns the pre-update losses.
    pub fn train_batch(&mut self, batch: &[&FeatureTensor]) -> Result<Losses> {
        let out = self.forward_client(batch)?;
        for (i, trace) in out.head_traces.iter().enumerate() {
            let targets: Vec<usize> = batch.iter().map(|s| self.head_class(s.c[i])).collect();
            let ce = nn::cross_entropy(trace, &targets)?;
            if !ce.loss.is_finite() {
                return Err(Error::NonFinite {
                    network: format!("client {} head {}", self.domain, i),
                });
            }
            let grads = self.heads[i].backward(trace, &ce.grad)?;
            self.head_opt[i].step(&mut self.heads[i], &grads)?;
        }
        let y: Vec<f64> = batch.iter().map(|s| s.y).collect();
        let loss = nn::mse(&out.y_hat, &y)?;
        if !loss.loss.is_finite() {
            return Err(Error::NonFinite {
                network: format!("client {} predictor", self.domain),
            });
        }
        let grads = self.predictor.backward(&out.predictor_trace, &loss.grad)?;
        self.predictor_opt.step(&mut self.predictor, &grads)?;
        if !self.predictor.all_finite() || !self.heads.iter().all(DenseNet::all_finite) {
            return Err(Error::NonFinite {
                network: format!("client {} parameters", self.domain),
            });
        }
        Ok(out.losses)
    }

    /// Forward-only MSE (raw label scale) and head accuracy against the
    /// pre-classification categories.
    pub fn evaluate(&self, samples: &[FeatureTensor]) -> Result<Evaluation> {
        if samples.is_empty() {
            return Err(Error::Data(format!("client {}: nothing to evaluate", self.domain)));
        }
        let mut sq = 0.0;
        let mut correct = vec![0usize; self.nf()];
        for chunk in samples.chunks(EVAL_CHUNK) {
            let refs: Vec<&FeatureTensor> = chunk.iter().collect();
            let out = self.forward_client(&refs)?;
            sq += out
                .y_hat
                .iter()
                .zip(chunk)
                .map(|(p, s)| (p - s.y) * (p - s.y))
                .sum::<f64>();
            for (b, s) in chunk.iter().enumerate() {
                for (i, hits) in correct.iter_mut().enumerate() {
                    let predicted = if out.p.get(b, 2 * i) > out.p.get(b, 2 * i + 1) {
                        0
                    } else {
                        1
                    };
                    if predicted == class_index(s.c[i]) {
                        *hits += 1;
                    }
                }
            }
        }
        let n = samples.len() as f64;
        Ok(Evaluation {
            mse: sq / n,
            per_head_accuracy: correct.into_iter().map(|c| c as f64 / n).collect(),
        })
    }

    pub fn snapshot_heads(&self) -> Vec<(usize, DenseNet)> {
        self.heads.iter().cloned().enumerate().collect()
    }

    /// Writes `manifest.toml`, `head_<i>.bin` and `predictor.bin` into `dir`.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let manifest = Manifest {
            domain: self.domain,
            nf: self.nf(),
            window: self.window,
            head_targets: self.head_targets,
            normalizer: self.normalizer.clone(),
        };
        let text = toml::to_string(&manifest).map_err(|e| Error::Checkpoint(e.to_string()))?;
        std::fs::write(dir.join("manifest.toml"), text)?;
        for (i, head) in self.heads.iter().enumerate() {
            nn::save(head, dir.join(format!("head_{i}.bin")))?;
        }
        nn::save(&self.predictor, dir.join("predictor.bin"))
    }

    /// Loads a client checkpoint with fresh optimiser state at `lr`.
    pub fn load_dir(dir: impl AsRef<Path>, lr: f64) -> Result<Self> {
        let dir = dir.as_ref();
        let text = std::fs::read_to_string(dir.join("manifest.toml"))?;
        let m: Manifest = toml::from_str(&text).map_err(|e| Error::Checkpoint(format!("manifest: {e}")))?;
        if m.normalizer.nf() != m.nf || m.normalizer.std.len() != m.nf {
            return Err(Error::Checkpoint("manifest normalizer does not match nf".into()));
        }
        let heads = (0..m.nf)
            .map(|i| DenseNet::load_expecting(dir.join(format!("head_{i}.bin")), &head_dims(m.window)))
            .collect::<Result<Vec<_>>>()?;
        let predictor = DenseNet::load_expecting(dir.join("predictor.bin"), &predictor_dims(m.nf, m.window))?;
        let mut model = Self::from_parts(m.domain, m.window, heads, predictor, m.normalizer, lr);
        model.head_targets = m.head_targets;
        Ok(model)
    }
}
