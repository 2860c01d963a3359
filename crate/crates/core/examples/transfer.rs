//! Compares no federation (ver2), random selection (ver4) and single
//! selection with gradient embeddings (ver5) on the reference synthetic task
//! over several seeds, printing per-domain median test MSE.
//!
//! ```text
//! cargo run --release -p mhhfl-core --example transfer -- [seeds] [config.toml]
//! ```

use mhhfl::harness;
use mhhfl::{RunConfig, Variant};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn main() -> Result<(), mhhfl::Error> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seeds: u64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(5);
    let base = match args.get(1) {
        Some(path) => Some(RunConfig::from_file(path)?),
        None => None,
    };
    let variants = [Variant::Ver2, Variant::Ver4, Variant::Ver5];
    let mut table: Vec<Vec<Vec<f64>>> = vec![Vec::new(); variants.len()];
    for seed in 0..seeds {
        for (k, &v) in variants.iter().enumerate() {
            let mut cfg = match &base {
                Some(c) => c.clone(),
                None => RunConfig::reference(seed, v),
            };
            cfg.seed = seed;
            cfg.variant = v;
            let out = harness::run(&cfg)?;
            let mse = out.metrics.test_mse();
            println!("seed {seed} {v}: {mse:.4?}");
            table[k].push(mse);
        }
    }
    for (k, v) in variants.iter().enumerate() {
        let domains = table[k][0].len();
        let med: Vec<f64> = (0..domains)
            .map(|j| median(table[k].iter().map(|r| r[j]).collect()))
            .collect();
        println!("{v} median {med:.4?}");
    }
    Ok(())
}
