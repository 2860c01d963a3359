//! `mhhfl` command-line interface. [`run`] takes the full argument list,
//! program name first, and returns the process exit code.
//!
//! Exit codes: 0 success, 1 usage, 2 config, 3 data, 4 numerical failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mhhfl::data::{self, BatchOrder, FeatureTensor};
use mhhfl::harness::{self, CsvDomain, CsvSource, RunOutput};
use mhhfl::{ClientModel, EmbedKind, Error, RunConfig, Variant};

#[derive(Parser)]
#[command(
    name = "mhhfl",
    version,
    about = "Multi-head heterogeneous federated learning simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; without it the reference synthetic setup is used
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// ver1 .. ver8
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured synthetic data as CSV plus a matching config
    Gen(Common),
    /// Run one simulation
    Train(Common),
    /// Run all eight variants
    Ablate(Common),
    /// Run one simulation per alpha
    SweepAlpha {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1,0.15,0.2")]
        alphas: Vec<f64>,
    },
    /// Dump the embeddings of every head in a client checkpoint
    Embed {
        #[command(flatten)]
        common: Common,
        /// Client checkpoint directory
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "gradient")]
        kind: Kind,
    },
    /// Forward-only evaluation of a client checkpoint
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Gradient,
    Data,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Val,
    Test,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_config(c: &Common) -> Result<RunConfig, Error> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::reference(0, Variant::Ver5),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(v) = c.variant {
        cfg.variant = v;
    }
    if let Some(h) = c.horizon {
        cfg.horizon = h;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(out: &RunOutput) {
    let s = &out.metrics.summary;
    println!(
        "{} seed={} alpha={} rounds={} config={}",
        s.variant, s.seed, s.alpha, s.rounds, s.config_hash
    );
    for f in &out.metrics.finals {
        println!(
            "  domain {}: best_epoch={} val_mse={:.6} test_mse={:.6}",
            f.domain, f.best_epoch, f.best_val_mse, f.test_mse
        );
    }
}

fn gen(c: &Common) -> Result<(), Error> {
    let cfg = load_config(c)?;
    let mut spec = cfg.synthetic.clone().ok_or_else(|| Error::Config {
        key: "synthetic".into(),
        msg: "gen needs a synthetic data source".into(),
    })?;
    spec.seed.get_or_insert(cfg.seed);
    let domains = data::generate_synthetic(&spec)?;
    let mut csv = CsvSource { domains: Vec::new() };
    for (j, d) in domains.iter().enumerate() {
        let rel = PathBuf::from("data").join(format!("domain_{j}"));
        std::fs::create_dir_all(c.out.join(&rel))?;
        let mut files = Vec::new();
        for run in &d.runs {
            let file = rel.join(format!("{}.csv", run.run_id));
            data::write_csv(run, "power", c.out.join(&file))?;
            files.push(file);
        }
        csv.domains.push(CsvDomain {
            files,
            features: d.runs[0].feature_names.clone(),
            label: "power".into(),
        });
    }
    let mut out_cfg = cfg.clone();
    out_cfg.synthetic = None;
    out_cfg.csv = Some(csv);
    std::fs::write(c.out.join("config.toml"), out_cfg.to_toml()?)?;
    println!("wrote {} domains to {}", domains.len(), c.out.display());
    Ok(())
}

fn train(c: &Common) -> Result<(), Error> {
    let cfg = load_config(c)?;
    let out = harness::run(&cfg)?;
    harness::write_outputs(&out, &c.out)?;
    print_summary(&out);
    Ok(())
}

fn write_many(runs: &[RunOutput], dir: &Path, name: impl Fn(&RunOutput) -> String) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    let mut all = String::new();
    for r in runs {
        harness::write_outputs(r, dir.join(name(r)))?;
        all.push_str(&r.metrics.to_jsonl());
    }
    std::fs::write(dir.join("metrics.jsonl"), all)?;
    let table = harness::comparison_table(runs);
    std::fs::write(dir.join("comparison.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn ablate(c: &Common) -> Result<(), Error> {
    let cfg = load_config(c)?;
    let runs = harness::ablate(&cfg)?;
    write_many(&runs, &c.out, |r| r.metrics.summary.variant.clone())
}

fn sweep(c: &Common, alphas: &[f64]) -> Result<(), Error> {
    let cfg = load_config(c)?;
    let runs = harness::sweep_alpha(&cfg, alphas)?;
    write_many(&runs, &c.out, |r| format!("alpha_{}", r.metrics.summary.alpha))
}

/// Windows one split of the checkpoint's domain with the checkpoint's own
/// normalizer.
fn client_split(cfg: &RunConfig, model: &ClientModel, split: Split) -> Result<Vec<FeatureTensor>, Error> {
    let domains = harness::load_domains(cfg)?;
    let runs = &domains
        .get(model.domain)
        .ok_or_else(|| Error::Data(format!("config has no domain {}", model.domain)))?
        .runs;
    let prepared = harness::prepare_domain(cfg, model.domain, runs)?;
    let ids = match split {
        Split::Train => &prepared.split.train_runs,
        Split::Val => &prepared.split.val_runs,
        Split::Test => &prepared.split.test_runs,
    };
    let mut out = Vec::new();
    for r in runs.iter().filter(|r| ids.contains(&r.run_id)) {
        out.extend(data::window(r, model.window, cfg.horizon, &model.normalizer)?);
    }
    Ok(out)
}

fn embed(c: &Common, checkpoint: &Path, kind: Kind) -> Result<(), Error> {
    let cfg = load_config(c)?;
    let model = ClientModel::load_dir(checkpoint, cfg.lr)?;
    let samples = client_split(&cfg, &model, Split::Train)?;
    let first = data::batch_indices(samples.len(), cfg.batch, BatchOrder::Sequential)
        .into_iter()
        .next()
        .ok_or_else(|| Error::Data("no training samples".into()))?;
    let batch: Vec<&FeatureTensor> = first.iter().map(|&i| &samples[i]).collect();
    let kind = match kind {
        Kind::Gradient => EmbedKind::Gradient,
        Kind::Data => EmbedKind::Data,
    };
    for (i, e) in harness::embed_heads(&model, &batch, kind)?.iter().enumerate() {
        let line = serde_json::json!({
            "domain": model.domain,
            "head": i,
            "embed_kind": kind,
            "sample_count": e.sample_count,
            "embedding": e.e,
        });
        println!("{line}");
    }
    Ok(())
}

fn eval(c: &Common, checkpoint: &Path, split: Split) -> Result<(), Error> {
    let cfg = load_config(c)?;
    let model = ClientModel::load_dir(checkpoint, cfg.lr)?;
    let samples = client_split(&cfg, &model, split)?;
    let ev = model.evaluate(&samples)?;
    let line = serde_json::json!({
        "domain": model.domain,
        "samples": samples.len(),
        "mse": ev.mse,
        "per_head_accuracy": ev.per_head_accuracy,
    });
    println!("{line}");
    Ok(())
}

pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Gen(c) => gen(c),
        Command::Train(c) => train(c),
        Command::Ablate(c) => ablate(c),
        Command::SweepAlpha { common, alphas } => sweep(common, alphas),
        Command::Embed {
            common,
            checkpoint,
            kind,
        } => embed(common, checkpoint, *kind),
        Command::Eval {
            common,
            checkpoint,
            split,
        } => eval(common, checkpoint, *split),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code() as u8
        }
    }
}
