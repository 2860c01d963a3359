//! The federated training loop.
//!
//! Clients are stepped round-robin, one batch each per step. Each client
//! counts its own main-loop batches; when a client is about to train batch
//! `k` with `k % federated_period_batches == 0` it takes part in the
//! federated round of that step. Participants first embed their heads on the
//! batch at hand and share (subject to the drop draw), then every participant
//! selects and blends against the updated pool, then everybody trains.

use std::time::Instant;

use sha2::{Digest, Sha256};

use super::config::RunConfig;
use super::metrics::{EpochRecord, FinalRecord, MetricsRecord, Phase, RunSummary};
use crate::data::{self, BatchOrder, FeatureTensor, Normalizer, RawRun, SplitSpec};
use crate::embed::{self, Embedding};
use crate::error::{Error, Result};
use crate::fed::{self, EmbedKind, FedMode, PoolDumpLine, SourcePool};
use crate::model::ClientModel;
use crate::rng::{self, tag};

/// One domain's runs after ingestion or generation.
#[derive(Debug, Clone)]
pub struct DomainRuns {
    pub runs: Vec<RawRun>,
}

/// One domain's windowed splits and training-set statistics.
#[derive(Debug, Clone)]
pub struct PreparedDomain {
    pub split: SplitSpec,
    pub normalizer: Normalizer,
    pub train: Vec<FeatureTensor>,
    pub val: Vec<FeatureTensor>,
    pub test: Vec<FeatureTensor>,
}

/// Loads or generates the configured runs, one entry per domain.
pub fn load_domains(cfg: &RunConfig) -> Result<Vec<DomainRuns>> {
    if let Some(spec) = &cfg.synthetic {
        let mut spec = spec.clone();
        spec.seed.get_or_insert(cfg.seed);
        return Ok(data::generate_synthetic(&spec)?
            .into_iter()
            .map(|d| DomainRuns { runs: d.runs })
            .collect());
    }
    let csv = cfg
        .csv
        .as_ref()
        .ok_or_else(|| Error::config("synthetic", "one of `synthetic` or `csv` is required"))?;
    csv.domains
        .iter()
        .enumerate()
        .map(|(j, d)| {
            let files: Vec<_> = d.files.iter().map(|f| cfg.resolve(f)).collect();
            Ok(DomainRuns {
                runs: data::ingest_runs(&files, &d.schema(), j)?,
            })
        })
        .collect()
}

pub fn prepare_domain(cfg: &RunConfig, domain: usize, runs: &[RawRun]) -> Result<PreparedDomain> {
    let ids: Vec<String> = runs.iter().map(|r| r.run_id.clone()).collect();
    let split = SplitSpec::by_runs(&ids, rng::derive(cfg.seed, &[tag::SPLIT, domain as u64]))?;
    let pick = |set: &[String]| -> Vec<&RawRun> { runs.iter().filter(|r| set.contains(&r.run_id)).collect() };
    let train_runs = pick(&split.train_runs);
    let normalizer = Normalizer::fit(&train_runs)?;
    let windows = |set: Vec<&RawRun>| -> Result<Vec<FeatureTensor>> {
        let mut out = Vec::new();
        for r in set {
            out.extend(data::window(r, cfg.window, cfg.horizon, &normalizer)?);
        }
        Ok(out)
    };
    let train = windows(train_runs)?;
    let val = windows(pick(&split.val_runs))?;
    let test = windows(pick(&split.test_runs))?;
    Ok(PreparedDomain {
        split,
        normalizer,
        train,
        val,
        test,
    })
}

pub fn prepare(cfg: &RunConfig) -> Result<Vec<PreparedDomain>> {
    load_domains(cfg)?
        .iter()
        .enumerate()
        .map(|(j, d)| prepare_domain(cfg, j, &d.runs))
        .collect()
}

pub fn split_hash(domains: &[PreparedDomain]) -> String {
    let splits: Vec<&SplitSpec> = domains.iter().map(|d| &d.split).collect();
    let digest = Sha256::digest(serde_json::to_string(&splits).expect("splits serialize").as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything a run produces besides files.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: MetricsRecord,
    /// Best (restored) model per client.
    pub models: Vec<ClientModel>,
    pub pool_dump: Vec<PoolDumpLine>,
}

struct Client {
    model: ClientModel,
    data: PreparedDomain,
    best_val: f64,
    best_epoch: usize,
    best: ClientModel,
    batches_seen: u64,
    rounds: u64,
    shares: u64,
}

pub fn embed_heads(model: &ClientModel, batch: &[&FeatureTensor], kind: EmbedKind) -> Result<Vec<Embedding>> {
    (0..model.nf())
        .map(|i| {
            let head = &model.heads[i];
            let trace = head.forward(&ClientModel::head_input(batch, i))?;
            let targets = model.head_target_categories(batch, i);
            match kind {
                EmbedKind::Gradient => embed::embed_gradient(&trace, &targets),
                EmbedKind::Data => embed::embed_data(head, &trace, &targets),
            }
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Trains one client epoch without federation; returns the mean batch MSE.
fn plain_epoch(client: &mut Client, batch: usize, seed: u64) -> Result<f64> {
    let batches = data::batch_indices(client.data.train.len(), batch, BatchOrder::Shuffled(seed));
    let mut losses = Vec::with_capacity(batches.len());
    for idx in batches {
        let refs: Vec<&FeatureTensor> = idx.iter().map(|&i| &client.data.train[i]).collect();
        losses.push(client.model.train_batch(&refs)?.mse);
    }
    Ok(mean(&losses))
}

fn validate_and_keep_best(client: &mut Client, epoch: usize, phase: Phase, train_loss: f64) -> Result<EpochRecord> {
    let val_mse = client.model.evaluate(&client.data.val)?.mse;
    if !val_mse.is_finite() {
        return Err(Error::NonFinite {
            network: format!("client {} validation", client.model.domain),
        });
    }
    let improved = val_mse < client.best_val;
    if improved {
        client.best_val = val_mse;
        client.best_epoch = epoch;
        client.best = client.model.clone();
    }
    Ok(EpochRecord {
        phase,
        epoch,
        domain: client.model.domain,
        train_loss,
        val_mse,
        improved,
    })
}

/// Runs the full experiment: split, window, initialise, pretrain, federated
/// training with save-best, and a forward-only test evaluation.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let prepared = prepare(cfg)?;
    let split_hash = split_hash(&prepared);
    run_prepared(cfg, prepared, split_hash, start)
}

pub fn run_prepared(
    cfg: &RunConfig,
    prepared: Vec<PreparedDomain>,
    split_hash: String,
    start: Instant,
) -> Result<RunOutput> {
    let fed_cfg = cfg.fed();
    let mut clients = prepared
        .into_iter()
        .enumerate()
        .map(|(j, data)| {
            if data.train.is_empty() || data.val.is_empty() || data.test.is_empty() {
                return Err(Error::Data(format!("domain {j}: a split has no samples")));
            }
            let mut model = ClientModel::new(j, cfg.window, data.normalizer.clone(), cfg.lr, cfg.seed)?;
            model.head_targets = cfg.variant.head_targets();
            Ok(Client {
                best: model.clone(),
                model,
                data,
                best_val: f64::INFINITY,
                best_epoch: 0,
                batches_seen: 0,
                rounds: 0,
                shares: 0,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut epochs = Vec::new();
    for e in 0..cfg.pretrain_epochs {
        for c in clients.iter_mut() {
            let seed = rng::derive(cfg.seed, &[tag::PRETRAIN, e as u64, c.model.domain as u64]);
            let loss = plain_epoch(c, cfg.batch, seed)?;
            epochs.push(validate_and_keep_best(c, e, Phase::Pretrain, loss)?);
        }
    }
    if cfg.pretrain_epochs > 0 {
        for c in clients.iter_mut() {
            c.model = c.best.clone();
        }
    }

    let mut pool = SourcePool::new();
    let mut drop_rng = rng::stream(cfg.seed, &[tag::DROP]);
    let mut select_rng = rng::stream(cfg.seed, &[tag::RANDOM_SELECT]);
    let mut pool_dump = Vec::new();
    let period = cfg.federated_period_batches as u64;
    let federating = fed_cfg.mode != FedMode::Off;

    for e in 0..cfg.epochs {
        let epoch = cfg.pretrain_epochs + e;
        let plans: Vec<Vec<Vec<usize>>> = clients
            .iter()
            .map(|c| {
                let seed = rng::derive(cfg.seed, &[tag::SHUFFLE, e as u64, c.model.domain as u64]);
                data::batch_indices(c.data.train.len(), cfg.batch, BatchOrder::Shuffled(seed))
            })
            .collect();
        let steps = plans.iter().map(Vec::len).max().unwrap_or(0);
        let mut losses: Vec<Vec<f64>> = vec![Vec::new(); clients.len()];
        for step in 0..steps {
            let active: Vec<usize> = (0..clients.len()).filter(|&j| step < plans[j].len()).collect();
            let participants: Vec<usize> = active
                .iter()
                .copied()
                .filter(|&j| federating && (clients[j].batches_seen + 1) % period == 0)
                .collect();
            if !participants.is_empty() {
                pool.begin_round();
                let mut own = Vec::with_capacity(participants.len());
                for &j in &participants {
                    let c = &mut clients[j];
                    let batch: Vec<&FeatureTensor> = plans[j][step].iter().map(|&i| &c.data.train[i]).collect();
                    let embs = embed_heads(&c.model, &batch, fed_cfg.embed_kind)?;
                    if pool.share(
                        j,
                        c.model.snapshot_heads(),
                        embs.clone(),
                        fed_cfg.embed_kind,
                        fed_cfg.dr,
                        &mut drop_rng,
                    )? {
                        c.shares += 1;
                    }
                    c.rounds += 1;
                    own.push(embs);
                }
                for (&j, embs) in participants.iter().zip(&own) {
                    let c = &mut clients[j];
                    for (i, emb) in embs.iter().enumerate() {
                        if let Some(h) =
                            fed::federate_head(&fed_cfg, &pool, (j, i), &c.model.heads[i], emb, &mut select_rng)?
                        {
                            c.model.heads[i] = h;
                        }
                    }
                }
                if cfg.pool_dump {
                    pool_dump.extend(pool.dump());
                }
            }
            for &j in &active {
                let c = &mut clients[j];
                let batch: Vec<&FeatureTensor> = plans[j][step].iter().map(|&i| &c.data.train[i]).collect();
                losses[j].push(c.model.train_batch(&batch)?.mse);
                c.batches_seen += 1;
            }
        }
        for (j, c) in clients.iter_mut().enumerate() {
            epochs.push(validate_and_keep_best(c, epoch, Phase::Train, mean(&losses[j]))?);
        }
    }

    let mut finals = Vec::with_capacity(clients.len());
    let mut models = Vec::with_capacity(clients.len());
    let versions = pool.domain_versions();
    for (j, c) in clients.iter().enumerate() {
        let test = c.best.evaluate(&c.data.test)?;
        finals.push(FinalRecord {
            domain: j,
            best_epoch: c.best_epoch,
            best_val_mse: c.best_val,
            test_mse: test.mse,
            per_head_accuracy: test.per_head_accuracy,
        });
        models.push(c.best.clone());
    }
    let summary = RunSummary {
        variant: cfg.variant.name().to_string(),
        seed: cfg.seed,
        alpha: cfg.alpha,
        dr: cfg.dr,
        horizon: cfg.horizon,
        config_hash: cfg.hash(),
        split_hash,
        rounds: pool.round(),
        client_rounds: clients.iter().map(|c| c.rounds).collect(),
        client_shares: clients.iter().map(|c| c.shares).collect(),
        pool_versions: (0..clients.len())
            .map(|j| versions.get(&j).copied().unwrap_or(0))
            .collect(),
    };
    Ok(RunOutput {
        metrics: MetricsRecord {
            epochs,
            finals,
            summary,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
        models,
        pool_dump,
    })
}
