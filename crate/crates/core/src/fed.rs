//! The centralized source pool and the share/select/blend protocol.
//!
//! At each federated round a client computes embeddings of its heads, shares
//! weights and embeddings with probability `1 - dr`, and then pulls every
//! head toward pooled heads chosen by embedding distance:
//! `theta <- (1 - alpha) theta + alpha * sum_l B_l theta_l`.
//! A head never selects its own pool entry.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embed::{embedding_distance, Embedding};
use crate::error::{Error, Result};
use crate::nn::DenseNet;

/// `(domain, head index)`.
pub type PoolKey = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FedMode {
    Off,
    Single,
    Multiple,
    #[serde(rename = "fedavg")]
    FedAvg,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedKind {
    Gradient,
    Data,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FedConfig {
    pub alpha: f64,
    pub dr: f64,
    pub mode: FedMode,
    pub embed_kind: EmbedKind,
    /// Weight sources by `softmax(-distance)` instead of `softmax(distance)`.
    pub negate_distance: bool,
}

impl FedConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config("alpha", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.dr) {
            return Err(Error::config("dr", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub domain: usize,
    pub head: usize,
    pub weights: DenseNet,
    pub embedding: Embedding,
    pub embed_kind: EmbedKind,
    /// Round in which this entry was shared.
    pub version: u64,
}

impl PoolEntry {
    pub fn key(&self) -> PoolKey {
        (self.domain, self.head)
    }
}

/// One pool entry as written to the audit dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolDumpLine {
    pub round: u64,
    pub domain: usize,
    pub head: usize,
    pub version: u64,
    pub embed_kind: EmbedKind,
    pub embedding: [f64; 4],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SourcePool {
    entries: BTreeMap<PoolKey, PoolEntry>,
    round: u64,
}

impl SourcePool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    /// Advances the round clock; shares made afterwards carry the new round.
    pub fn begin_round(&mut self) -> u64 {
        self.round += 1;
        self.round
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: PoolKey) -> Option<&PoolEntry> {
        self.entries.get(&key)
    }

    /// Entries in key order.
    pub fn entries(&self) -> impl Iterator<Item = &PoolEntry> {
        self.entries.values()
    }

    /// Replaces all of `domain`'s entries with a single Bernoulli draw: the
    /// share happens with probability `1 - dr`. Returns whether it happened.
    pub fn share<R: Rng>(
        &mut self,
        domain: usize,
        snapshots: Vec<(usize, DenseNet)>,
        embeddings: Vec<Embedding>,
        kind: EmbedKind,
        dr: f64,
        rng: &mut R,
    ) -> Result<bool> {
        if snapshots.len() != embeddings.len() {
            return Err(Error::Shape(format!(
                "{} snapshots but {} embeddings",
                snapshots.len(),
                embeddings.len()
            )));
        }
        let draw: f64 = rng.gen();
        if draw < dr {
            return Ok(false);
        }
        self.entries.retain(|&(d, _), _| d != domain);
        for ((head, weights), embedding) in snapshots.into_iter().zip(embeddings) {
            self.entries.insert(
                (domain, head),
                PoolEntry {
                    domain,
                    head,
                    weights,
                    embedding,
                    embed_kind: kind,
                    version: self.round,
                },
            );
        }
        Ok(true)
    }

    pub fn dump(&self) -> Vec<PoolDumpLine> {
        self.entries()
            .map(|e| PoolDumpLine {
                round: self.round,
                domain: e.domain,
                head: e.head,
                version: e.version,
                embed_kind: e.embed_kind,
                embedding: e.embedding.e,
            })
            .collect()
    }

    /// Latest version per domain present in the pool.
    pub fn domain_versions(&self) -> BTreeMap<usize, u64> {
        let mut out = BTreeMap::new();
        for e in self.entries() {
            let v = out.entry(e.domain).or_insert(0);
            *v = (*v).max(e.version);
        }
        out
    }
}

/// Closest pooled head to `target_embedding`, excluding `target` itself.
/// Ties resolve to the smallest key.
pub fn select_single<'a>(pool: &'a SourcePool, target: PoolKey, target_embedding: &Embedding) -> Result<&'a PoolEntry> {
    let mut best: Option<(f64, &PoolEntry)> = None;
    for e in pool.entries().filter(|e| e.key() != target) {
        let d = embedding_distance(&e.embedding, target_embedding);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, e));
        }
    }
    best.map(|(_, e)| e).ok_or(Error::PoolEmpty)
}

/// Closest head of every pooled domain, excluding `target` from its own
/// domain. Domains without an eligible head are skipped. Ordered by domain.
pub fn select_multiple<'a>(pool: &'a SourcePool, target: PoolKey, target_embedding: &Embedding) -> Vec<&'a PoolEntry> {
    let mut best: BTreeMap<usize, (f64, &PoolEntry)> = BTreeMap::new();
    for e in pool.entries().filter(|e| e.key() != target) {
        let d = embedding_distance(&e.embedding, target_embedding);
        match best.get(&e.domain) {
            Some(&(bd, _)) if d >= bd => {}
            _ => {
                best.insert(e.domain, (d, e));
            }
        }
    }
    best.into_values().map(|(_, e)| e).collect()
}

/// Softmax over the distances of the selected heads to the target.
pub fn blend_scale(selected: &[&PoolEntry], target_embedding: &Embedding, negate_distance: bool) -> Vec<f64> {
    let sign = if negate_distance { -1.0 } else { 1.0 };
    let logits: Vec<f64> = selected
        .iter()
        .map(|e| sign * embedding_distance(&e.embedding, target_embedding))
        .collect();
    softmax(&logits)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// `(1 - alpha) * target + alpha * sum_l weights[l] * sources[l]`,
/// element-wise over every parameter.
pub fn blend_nets(target: &DenseNet, sources: &[&DenseNet], weights: &[f64], alpha: f64) -> Result<DenseNet> {
    if sources.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} sources but {} blending weights",
            sources.len(),
            weights.len()
        )));
    }
    if let Some(k) = sources.iter().position(|s| !s.same_topology(target)) {
        return Err(Error::Topology(format!(
            "source {k} has dims {:?}, target {:?}",
            sources[k].dims(),
            target.dims()
        )));
    }
    if alpha == 0.0 {
        return Ok(target.clone());
    }
    let mut out = target.clone();
    for (layer_idx, layer) in out.layers_mut().iter_mut().enumerate() {
        let blend = |own: &mut f64, pick: &dyn Fn(&DenseNet) -> f64| {
            let mixed: f64 = sources.iter().zip(weights).map(|(s, b)| b * pick(s)).sum();
            *own = (1.0 - alpha) * *own + alpha * mixed;
        };
        for (p, own) in layer.weights.as_mut_slice().iter_mut().enumerate() {
            blend(own, &|s| s.layers()[layer_idx].weights.as_slice()[p]);
        }
        for (p, own) in layer.bias.iter_mut().enumerate() {
            blend(own, &|s| s.layers()[layer_idx].bias[p]);
        }
    }
    Ok(out)
}

/// [`blend_nets`] over pool entries; a topology mismatch names the entry.
pub fn blend_update(target: &DenseNet, selected: &[&PoolEntry], weights: &[f64], alpha: f64) -> Result<DenseNet> {
    if let Some(e) = selected.iter().find(|e| !e.weights.same_topology(target)) {
        return Err(Error::Topology(format!(
            "pool entry (domain {}, head {}) has dims {:?}, target {:?}",
            e.domain,
            e.head,
            e.weights.dims(),
            target.dims()
        )));
    }
    let nets: Vec<&DenseNet> = selected.iter().map(|e| &e.weights).collect();
    blend_nets(target, &nets, weights, alpha)
}

/// Unweighted mean of every pooled head sharing `like`'s topology.
pub fn fedavg_aggregate(pool: &SourcePool, like: &DenseNet) -> Result<DenseNet> {
    let nets: Vec<&DenseNet> = pool
        .entries()
        .map(|e| &e.weights)
        .filter(|w| w.same_topology(like))
        .collect();
    if nets.is_empty() {
        return Err(Error::PoolEmpty);
    }
    let n = nets.len() as f64;
    let mut mean = nets[0].clone();
    mean.params_mut().for_each(|p| *p = 0.0);
    for net in &nets {
        for (m, v) in mean.params_mut().zip(net.params()) {
            *m += v;
        }
    }
    mean.params_mut().for_each(|p| *p /= n);
    Ok(mean)
}

/// Uniform draw over pooled heads other than `target`.
pub fn random_select<'a, R: Rng>(pool: &'a SourcePool, target: PoolKey, rng: &mut R) -> Result<&'a PoolEntry> {
    let eligible: Vec<&PoolEntry> = pool.entries().filter(|e| e.key() != target).collect();
    if eligible.is_empty() {
        return Err(Error::PoolEmpty);
    }
    Ok(eligible[rng.gen_range(0..eligible.len())])
}

/// Applies the configured mode to one head. `Ok(None)` means nothing was
/// eligible this round and the head is left as is.
pub fn federate_head<R: Rng>(
    cfg: &FedConfig,
    pool: &SourcePool,
    target: PoolKey,
    head: &DenseNet,
    embedding: &Embedding,
    rng: &mut R,
) -> Result<Option<DenseNet>> {
    let blended = match cfg.mode {
        FedMode::Off => return Ok(None),
        FedMode::Single => match select_single(pool, target, embedding) {
            Ok(e) => blend_update(head, &[e], &[1.0], cfg.alpha)?,
            Err(Error::PoolEmpty) => return Ok(None),
            Err(e) => return Err(e),
        },
        FedMode::Multiple => {
            let selected = select_multiple(pool, target, embedding);
            if selected.is_empty() {
                return Ok(None);
            }
            let b = blend_scale(&selected, embedding, cfg.negate_distance);
            blend_update(head, &selected, &b, cfg.alpha)?
        }
        FedMode::FedAvg => match fedavg_aggregate(pool, head) {
            Ok(mean) => blend_nets(head, &[&mean], &[1.0], cfg.alpha)?,
            Err(Error::PoolEmpty) => return Ok(None),
            Err(e) => return Err(e),
        },
        FedMode::Random => match random_select(pool, target, rng) {
            Ok(e) => blend_update(head, &[e], &[1.0], cfg.alpha)?,
            Err(Error::PoolEmpty) => return Ok(None),
            Err(e) => return Err(e),
        },
    };
    Ok(Some(blended))
}
