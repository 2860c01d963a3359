//! Experiment orchestration: configuration, the federated training loop,
//! the eight-variant ablation, the alpha sweep and output files.

mod config;
mod metrics;
mod sim;

pub use config::{CsvDomain, CsvSource, RunConfig, Variant};
pub use metrics::{parse_jsonl, EpochRecord, FinalRecord, MetricsLine, MetricsRecord, Phase, RunSummary};
pub use sim::{
    embed_heads, load_domains, prepare, prepare_domain, run, split_hash, DomainRuns, PreparedDomain, RunOutput,
};

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

/// Runs every variant on the same data and seed.
pub fn ablate(cfg: &RunConfig) -> Result<Vec<RunOutput>> {
    Variant::ALL
        .iter()
        .map(|&v| {
            let mut c = cfg.clone();
            c.variant = v;
            run(&c)
        })
        .collect()
}

/// One run per alpha with everything else fixed.
pub fn sweep_alpha(cfg: &RunConfig, alphas: &[f64]) -> Result<Vec<RunOutput>> {
    if alphas.is_empty() {
        return Err(crate::Error::config("alphas", "needs at least one value"));
    }
    alphas
        .iter()
        .map(|&a| {
            let mut c = cfg.clone();
            c.alpha = a;
            run(&c)
        })
        .collect()
}

/// Fixed-width table of test MSE per domain, one row per run.
pub fn comparison_table(runs: &[RunOutput]) -> String {
    let domains = runs.first().map_or(0, |r| r.metrics.finals.len());
    let mut out = format!("{:<8}{:<40}", "variant", "description");
    for j in 0..domains {
        let _ = write!(out, "{:>14}", format!("test_mse[{j}]"));
    }
    out.push('\n');
    for r in runs {
        let s = &r.metrics.summary;
        let label = s.variant.parse::<Variant>().map(|v| v.label()).unwrap_or("");
        let _ = write!(out, "{:<8}{:<40}", s.variant, format!("{label} (alpha={})", s.alpha));
        for f in &r.metrics.finals {
            let _ = write!(out, "{:>14.6}", f.test_mse);
        }
        out.push('\n');
    }
    out
}

/// Writes `metrics.jsonl`, `timing.json`, optional `pool.jsonl` and one
/// checkpoint directory per client under `dir`.
pub fn write_outputs(out: &RunOutput, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("metrics.jsonl"), out.metrics.to_jsonl())?;
    let timing = serde_json::json!({
        "config_hash": out.metrics.summary.config_hash,
        "wall_time_s": out.metrics.wall_time_s,
    });
    std::fs::write(dir.join("timing.json"), format!("{timing}\n"))?;
    if !out.pool_dump.is_empty() {
        let mut text = String::new();
        for line in &out.pool_dump {
            text.push_str(&serde_json::to_string(line).expect("pool dump serializes"));
            text.push('\n');
        }
        std::fs::write(dir.join("pool.jsonl"), text)?;
    }
    for m in &out.models {
        m.save_dir(dir.join("checkpoints").join(format!("domain_{}", m.domain)))?;
    }
    Ok(())
}
