//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Pass criterion numbers as arguments to run a subset:
//!
//! ```text
//! cargo test -p mhhfl-verify --test acceptance -- 1 2 5
//! ```

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use mhhfl::embed::{embed_data, embed_gradient};
use mhhfl::fed::{self, SourcePool};
use mhhfl::harness::{self, RunOutput};
use mhhfl::model::{self, ClientModel};
use mhhfl::nn::Layer;
use mhhfl::nn::{cross_entropy, mse};
use mhhfl::{
    embedding_distance, Activation, DenseNet, EmbedKind, Embedding, ForwardTrace, Matrix, Normalizer, PoolEntry,
    RunConfig, Variant,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.5..1.5)).collect())
}

fn random_net(rng: &mut ChaCha8Rng, out: usize, last: Activation) -> DenseNet {
    let depth = rng.gen_range(1..4);
    let mut dims = vec![rng.gen_range(1..=8)];
    dims.extend((1..depth).map(|_| rng.gen_range(1..=8)));
    dims.push(out);
    let mut acts = vec![Activation::LeakyRelu; depth - 1];
    acts.push(last);
    DenseNet::init(&dims, &acts, rng.gen()).unwrap()
}

/// Largest relative error between analytic gradients and central differences.
fn worst_fd_error(net: &DenseNet, analytic: Vec<f64>, loss: impl Fn(&DenseNet) -> f64) -> f64 {
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for (i, &g) in analytic.iter().enumerate() {
        let mut up = net.clone();
        *up.params_mut().nth(i).unwrap() += eps;
        let mut dn = net.clone();
        *dn.params_mut().nth(i).unwrap() -= eps;
        let fd = (loss(&up) - loss(&dn)) / (2.0 * eps);
        worst = worst.max(rel_err(g, fd));
    }
    worst
}

/// Central differences are only meaningful away from the LeakyReLU kink.
fn near_kink(net: &DenseNet, trace: &ForwardTrace) -> bool {
    net.layers()
        .iter()
        .zip(&trace.pre)
        .filter(|(l, _)| l.activation == Activation::LeakyRelu)
        .any(|(_, z)| z.as_slice().iter().any(|v| v.abs() < 1e-3))
}

fn gradient_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_ce, mut worst_mse) = (0.0f64, 0.0f64);
    let mut redrawn = 0;
    let mut trials = 0;
    while trials < 100 {
        let net = random_net(&mut rng, 2, Activation::Softmax);
        let reg = random_net(&mut rng, 1, Activation::Identity);
        let t = rng.gen_range(1..=8);
        let x = random_matrix(&mut rng, t, net.in_dim());
        let xr = random_matrix(&mut rng, t, reg.in_dim());
        let trace = net.forward(&x).unwrap();
        let trace_r = reg.forward(&xr).unwrap();
        if near_kink(&net, &trace) || near_kink(&reg, &trace_r) {
            redrawn += 1;
            continue;
        }
        trials += 1;

        let targets: Vec<usize> = (0..t).map(|_| rng.gen_range(0..2)).collect();
        let g = net
            .backward(&trace, &cross_entropy(&trace, &targets).unwrap().grad)
            .unwrap();
        let loss = |n: &DenseNet| cross_entropy(&n.forward(&x).unwrap(), &targets).unwrap().loss;
        worst_ce = worst_ce.max(worst_fd_error(&net, g.iter().collect(), loss));

        let y: Vec<f64> = (0..t).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let g = reg
            .backward(&trace_r, &mse(&trace_r.output().col(0), &y).unwrap().grad)
            .unwrap();
        let loss = |n: &DenseNet| mse(&n.forward(&xr).unwrap().output().col(0), &y).unwrap().loss;
        worst_mse = worst_mse.max(worst_fd_error(&reg, g.iter().collect(), loss));
    }
    ensure(worst_ce < 1e-4, || format!("cross-entropy rel err {worst_ce:.2e}"))?;
    ensure(worst_mse < 1e-4, || format!("mse rel err {worst_mse:.2e}"))?;

    // one sample: d loss / d w1 = -h (1[C=+1] - p1), d loss / d w2 = -h (1[C=-1] - p2)
    let mut worst_closed: f64 = 0.0;
    for _ in 0..100 {
        let net = random_net(&mut rng, 2, Activation::Softmax);
        let x = random_matrix(&mut rng, 1, net.in_dim());
        let class = rng.gen_range(0..2);
        let trace = net.forward(&x).unwrap();
        let g = net
            .backward(&trace, &cross_entropy(&trace, &[class]).unwrap().grad)
            .unwrap();
        let out = g.layers.last().unwrap();
        let h = trace.last_hidden().row(0);
        let p = trace.output().row(0);
        for (k, &pk) in p.iter().enumerate() {
            let hit = if k == class { 1.0 } else { 0.0 };
            for (n, &hn) in h.iter().enumerate() {
                worst_closed = worst_closed.max((out.weights.get(k, n) + hn * (hit - pk)).abs());
            }
        }
    }
    ensure(worst_closed < 1e-9, || {
        format!("closed-form output gradient err {worst_closed:.2e}")
    })?;
    Ok(format!(
        "100 ce + 100 mse nets ({redrawn} redrawn near a kink); ce {worst_ce:.1e}, mse {worst_mse:.1e}, closed form {worst_closed:.1e}"
    ))
}

fn embedding_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut anti, mut consistency) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let net = random_net(&mut rng, 2, Activation::Softmax);
        let t = rng.gen_range(1..=8);
        let x = random_matrix(&mut rng, t, net.in_dim());
        let c: Vec<i8> = (0..t).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
        let trace = net.forward(&x).unwrap();
        let e = embed_gradient(&trace, &c).unwrap().e;
        anti = anti.max((e[2] + e[0]).abs()).max((e[3] + e[1]).abs());
        // log-likelihood gradient of w1, summed over the batch, straight from the trace
        let h = trace.last_hidden();
        let d = h.cols();
        let mut grad_w1 = vec![0.0; d];
        for (s, &cs) in c.iter().enumerate() {
            let y = if cs == 1 { 1.0 } else { 0.0 };
            let p1 = trace.output().get(s, 0);
            for (n, g) in grad_w1.iter_mut().enumerate() {
                *g += h.get(s, n) * (y - p1);
            }
        }
        let oracle = grad_w1.iter().sum::<f64>() / d as f64 / t as f64;
        consistency = consistency.max((e[0] + e[1] - oracle).abs());
    }
    ensure(anti <= 1e-12, || format!("antisymmetry err {anti:.2e}"))?;
    ensure(consistency <= 1e-9, || format!("force/gradient err {consistency:.2e}"))?;
    Ok(format!(
        "1000 batches; antisymmetry {anti:.1e}, force/gradient {consistency:.1e}"
    ))
}

fn single_sample_trace(hidden: Vec<f64>, p1: f64) -> ForwardTrace {
    let h = Matrix::from_rows(&[hidden]);
    let probs = Matrix::from_rows(&[vec![p1, 1.0 - p1]]);
    ForwardTrace {
        activations: vec![h.clone(), h.clone(), probs.clone()],
        pre: vec![h, probs],
    }
}

fn hand_embeddings() -> Check {
    let trace = single_sample_trace(vec![1.0, 3.0], 0.75);
    let g = embed_gradient(&trace, &[1]).unwrap().e;
    ensure(g == [0.5, 0.0, -0.5, 0.0], || format!("gradient-based {g:?}"))?;
    let head = DenseNet::from_layers(vec![
        Layer {
            weights: Matrix::zeros(2, 2),
            bias: vec![0.0; 2],
            activation: Activation::LeakyRelu,
        },
        Layer {
            weights: Matrix::from_rows(&[vec![0.5, 1.5], vec![-2.0, 0.0]]),
            bias: vec![0.0; 2],
            activation: Activation::Softmax,
        },
    ])
    .unwrap();
    let d = embed_data(&head, &trace, &[1]).unwrap().e;
    ensure(d == [0.25, 0.0, 0.25, 0.0], || format!("data-based {d:?}"))?;
    Ok(format!("gradient {g:?}, data {d:?}"))
}

fn tiny_net() -> DenseNet {
    DenseNet::init(&[1, 1], &[Activation::Identity], 0).unwrap()
}

/// A pool whose embeddings come from a coarse grid so distances tie often.
fn random_pool(rng: &mut ChaCha8Rng) -> SourcePool {
    let mut pool = SourcePool::new();
    pool.begin_round();
    let domains = rng.gen_range(1..=8);
    for d in 0..domains {
        let heads = rng.gen_range(1..=8);
        let embs: Vec<Embedding> = (0..heads).map(|_| grid_embedding(rng)).collect();
        let snaps = (0..heads).map(|i| (i, tiny_net())).collect();
        pool.share(d, snaps, embs, EmbedKind::Gradient, 0.0, rng).unwrap();
    }
    pool
}

fn grid_embedding(rng: &mut ChaCha8Rng) -> Embedding {
    Embedding {
        e: [0; 4].map(|_| rng.gen_range(-2..=2) as f64 * 0.5),
        sample_count: 1,
    }
}

fn brute_force<'a>(candidates: impl Iterator<Item = &'a PoolEntry>, emb: &Embedding) -> Option<&'a PoolEntry> {
    let mut all: Vec<(f64, (usize, usize), &PoolEntry)> = candidates
        .map(|e| (embedding_distance(&e.embedding, emb), e.key(), e))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    all.first().map(|c| c.2)
}

fn selection_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut ties = 0;
    for trial in 0..1000 {
        let pool = random_pool(&mut rng);
        let keys: Vec<_> = pool.entries().map(PoolEntry::key).collect();
        let target = keys[rng.gen_range(0..keys.len())];
        let emb = grid_embedding(&mut rng);
        let eligible = || pool.entries().filter(move |e| e.key() != target);

        let expected = brute_force(eligible(), &emb).map(PoolEntry::key);
        let got = fed::select_single(&pool, target, &emb).ok().map(PoolEntry::key);
        ensure(got == expected, || {
            format!("trial {trial}: single {got:?}, expected {expected:?}")
        })?;
        if let Some(best) = expected {
            let d = embedding_distance(&pool.get(best).unwrap().embedding, &emb);
            if eligible()
                .filter(|e| embedding_distance(&e.embedding, &emb) == d)
                .count()
                > 1
            {
                ties += 1;
            }
        }

        let mut by_domain: BTreeMap<usize, Vec<&PoolEntry>> = BTreeMap::new();
        for e in eligible() {
            by_domain.entry(e.domain).or_default().push(e);
        }
        let expected: Vec<_> = by_domain
            .values()
            .filter_map(|v| brute_force(v.iter().copied(), &emb).map(PoolEntry::key))
            .collect();
        let got: Vec<_> = fed::select_multiple(&pool, target, &emb)
            .iter()
            .map(|e| e.key())
            .collect();
        ensure(got == expected, || {
            format!("trial {trial}: multiple {got:?}, expected {expected:?}")
        })?;
    }
    ensure(ties > 100, || format!("only {ties} tie cases exercised"))?;
    Ok(format!("1000 pools, {ties} with tied minima"))
}

fn random_entry(rng: &mut ChaCha8Rng, domain: usize, like: &DenseNet) -> PoolEntry {
    let mut weights = like.clone();
    weights.params_mut().for_each(|p| *p = rng.gen_range(-2.0..2.0));
    PoolEntry {
        domain,
        head: 0,
        weights,
        embedding: Embedding {
            e: [0; 4].map(|_| rng.gen_range(-1.0..1.0)),
            sample_count: 1,
        },
        embed_kind: EmbedKind::Gradient,
        version: 1,
    }
}

fn blending_algebra() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let like = DenseNet::init(&model::head_dims(5), &model::head_activations(), 0).unwrap();
    let mut worst_sum: f64 = 0.0;
    let mut worst_fixed: f64 = 0.0;
    for trial in 0..200 {
        let mut target = like.clone();
        target.params_mut().for_each(|p| *p = rng.gen_range(-2.0..2.0));
        let n = rng.gen_range(1..=6);
        let entries: Vec<PoolEntry> = (0..n).map(|d| random_entry(&mut rng, d, &like)).collect();
        let selected: Vec<&PoolEntry> = entries.iter().collect();
        let emb = Embedding {
            e: [0; 4].map(|_| rng.gen_range(-1.0..1.0)),
            sample_count: 1,
        };
        let b = fed::blend_scale(&selected, &emb, trial % 2 == 1);
        worst_sum = worst_sum.max((b.iter().sum::<f64>() - 1.0).abs());

        let same = fed::blend_update(&target, &selected, &b, 0.0).unwrap();
        ensure(
            same.params()
                .zip(target.params())
                .all(|(a, b)| a.to_bits() == b.to_bits()),
            || format!("trial {trial}: alpha 0 changed the target"),
        )?;

        let copy = fed::blend_update(&target, &selected[..1], &[1.0], 1.0).unwrap();
        ensure(copy == selected[0].weights, || {
            format!("trial {trial}: alpha 1 is not a copy")
        })?;

        let alpha = rng.gen_range(0.0..=1.0);
        let mixed = fed::blend_update(&target, &selected, &b, alpha).unwrap();
        for (k, m) in mixed.params().enumerate() {
            let vals = std::iter::once(target.params().nth(k).unwrap())
                .chain(selected.iter().map(|e| e.weights.params().nth(k).unwrap()));
            let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
            ensure(m >= lo - 1e-12 && m <= hi + 1e-12, || {
                format!("trial {trial}: param {k} = {m} outside [{lo}, {hi}]")
            })?;
        }

        let clones: Vec<PoolEntry> = (0..n)
            .map(|d| PoolEntry {
                weights: target.clone(),
                ..entries[d].clone()
            })
            .collect();
        let refs: Vec<&PoolEntry> = clones.iter().collect();
        let b = fed::blend_scale(&refs, &emb, false);
        let fixed = fed::blend_update(&target, &refs, &b, alpha).unwrap();
        for (a, t) in fixed.params().zip(target.params()) {
            worst_fixed = worst_fixed.max((a - t).abs());
        }
    }
    ensure(worst_sum <= 1e-12, || format!("sum of scales off by {worst_sum:.2e}"))?;
    ensure(worst_fixed <= 1e-15, || {
        format!("identical sources moved the target by {worst_fixed:.2e}")
    })?;
    Ok(format!(
        "200 blends; |sum B - 1| {worst_sum:.1e}, fixed point {worst_fixed:.1e}"
    ))
}

type EntryBits = (usize, usize, u64, Vec<u64>, [u64; 4]);

fn entry_bits(pool: &SourcePool) -> Vec<EntryBits> {
    pool.entries()
        .map(|e| {
            (
                e.domain,
                e.head,
                e.version,
                e.weights.params().map(f64::to_bits).collect(),
                e.embedding.e.map(f64::to_bits),
            )
        })
        .collect()
}

fn protocol_statistics() -> Check {
    let mut rng = mhhfl::rng::stream(6, &[mhhfl::rng::tag::DROP]);
    let mut weight_rng = ChaCha8Rng::seed_from_u64(6);
    let like = tiny_net();
    let mut pool = SourcePool::new();
    let rounds = 10_000;
    let mut shared = 0;
    for r in 0..rounds {
        pool.begin_round();
        let before = entry_bits(&pool);
        let domain = r % 3;
        let snaps = (0..2)
            .map(|i| (i, random_entry(&mut weight_rng, domain, &like).weights))
            .collect();
        let embs = (0..2).map(|_| grid_embedding(&mut weight_rng)).collect();
        if pool.share(domain, snaps, embs, EmbedKind::Data, 0.5, &mut rng).unwrap() {
            shared += 1;
        } else {
            ensure(entry_bits(&pool) == before, || {
                format!("round {r}: dropped share changed the pool")
            })?;
        }
    }
    let rate = shared as f64 / rounds as f64;
    ensure((0.48..=0.52).contains(&rate), || format!("share rate {rate}"))?;
    Ok(format!("share rate {rate:.4} over {rounds} rounds"))
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let mut texts = Vec::new();
    let mut secs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let start = Instant::now();
        let code = mhhfl_cli::run(["mhhfl", "train", "--out", out.to_str().unwrap()]);
        secs.push(start.elapsed().as_secs_f64());
        ensure(code == 0, || format!("train exited with {code}"))?;
        texts.push(std::fs::read(out.join("metrics.jsonl")).unwrap());
    }
    ensure(texts[0] == texts[1], || "metrics files differ".into())?;
    let worst = secs.iter().copied().fold(0.0, f64::max);
    ensure(worst < 300.0, || format!("reference run took {worst:.1}s"))?;
    Ok(format!(
        "identical {} byte metrics; reference run {worst:.1}s",
        texts[0].len()
    ))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

const SEEDS: u64 = 5;

/// Reference runs shared by the two statistical criteria.
#[derive(Default)]
struct Runs {
    by_variant: BTreeMap<(Variant, u64), RunOutput>,
}

impl Runs {
    fn get(&mut self, v: Variant, seed: u64) -> &RunOutput {
        self.by_variant
            .entry((v, seed))
            .or_insert_with(|| harness::run(&RunConfig::reference(seed, v)).unwrap())
    }
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

fn synthetic_transfer(runs: &mut Runs) -> Check {
    let medians = |runs: &mut Runs, v: Variant| -> Vec<f64> {
        let per_seed: Vec<Vec<f64>> = (0..SEEDS).map(|s| runs.get(v, s).metrics.test_mse()).collect();
        (0..per_seed[0].len())
            .map(|j| median(per_seed.iter().map(|r| r[j]).collect()))
            .collect()
    };
    let sg = medians(runs, Variant::Ver5);
    let off = medians(runs, Variant::Ver2);
    let random = medians(runs, Variant::Ver4);
    let wins = |other: &[f64]| sg.iter().zip(other).filter(|(a, b)| a < b).count();
    let (w_off, w_rand) = (wins(&off), wins(&random));
    let detail = format!(
        "median test MSE ver5 {} ver2 {} ver4 {}; ver5 beats ver2 on {w_off}/4, ver4 on {w_rand}/4",
        fmt(&sg),
        fmt(&off),
        fmt(&random)
    );
    if w_off >= 3 && w_rand >= 3 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn alpha_sweep(runs: &mut Runs) -> Check {
    let alphas = [0.0, 0.05, 0.1, 0.15, 0.2];
    let mut zero_best = 0;
    let mut means = Vec::new();
    for seed in 0..SEEDS {
        let cfg = RunConfig::reference(seed, Variant::Ver7);
        let sweep = harness::sweep_alpha(&cfg, &alphas).map_err(|e| e.to_string())?;
        let got: Vec<f64> = sweep.iter().map(|r| r.metrics.summary.alpha).collect();
        ensure(got == alphas, || format!("seed {seed}: sweep emitted alphas {got:?}"))?;
        let off = runs.get(Variant::Ver2, seed);
        ensure(
            sweep[0].metrics.epochs == off.metrics.epochs && sweep[0].metrics.finals == off.metrics.finals,
            || format!("seed {seed}: alpha 0 diverges from federation off"),
        )?;
        let total: Vec<f64> = sweep
            .iter()
            .map(|r| r.metrics.test_mse().iter().sum::<f64>() / r.metrics.finals.len() as f64)
            .collect();
        if total[1..].iter().all(|&t| total[0] < t) {
            zero_best += 1;
        }
        means.push(fmt(&total));
    }
    let detail = format!(
        "alpha 0 strictly best on {zero_best}/{SEEDS} seeds; mean test MSE per alpha {}",
        means.join(" ")
    );
    if zero_best * 2 < SEEDS as usize {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn architecture() -> Check {
    let head = [5, 8, 64, 32, 8, 2];
    ensure(model::head_dims(5) == head, || {
        format!("head dims {:?}", model::head_dims(5))
    })?;
    let mut counts = Vec::new();
    for (nf, expected) in [(25, 78_987), (19, 60_735)] {
        let norm = Normalizer {
            mean: vec![0.0; nf],
            std: vec![1.0; nf],
        };
        let m = ClientModel::new(0, 5, norm, 0.01, 0).unwrap();
        ensure(m.heads.len() == nf, || format!("{} heads for nf {nf}", m.heads.len()))?;
        for h in &m.heads {
            ensure(h.dims() == head, || format!("head dims {:?}", h.dims()))?;
            ensure(h.param_count() == 2986, || format!("head params {}", h.param_count()))?;
        }
        let pred = [7 * nf, 8, 64, 32, 8, 1];
        ensure(m.predictor.dims() == pred, || {
            format!("predictor dims {:?}", m.predictor.dims())
        })?;
        let acts = m.predictor.activations();
        let want = [
            Activation::LeakyRelu,
            Activation::LeakyRelu,
            Activation::LeakyRelu,
            Activation::Identity,
            Activation::Identity,
        ];
        ensure(acts == want, || format!("predictor activations {acts:?}"))?;
        ensure(m.heads[0].activations().last() == Some(&Activation::Softmax), || {
            "head output is not softmax".into()
        })?;
        ensure(m.param_count() == expected, || {
            format!("nf {nf}: {} params, expected {expected}", m.param_count())
        })?;
        counts.push(format!("nf {nf}: {}", m.param_count()));
    }
    Ok(counts.join(", "))
}

fn main() -> ExitCode {
    let picked: Vec<usize> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut runs = Runs::default();
    type Criterion = (usize, &'static str, Box<dyn FnOnce(&mut Runs) -> Check>);
    let criteria: Vec<Criterion> = vec![
        (1, "gradient oracle", Box::new(|_| gradient_oracle())),
        (2, "embedding identities", Box::new(|_| embedding_identities())),
        (3, "hand-computed embeddings", Box::new(|_| hand_embeddings())),
        (4, "selection oracle", Box::new(|_| selection_oracle())),
        (5, "blending algebra", Box::new(|_| blending_algebra())),
        (6, "protocol statistics", Box::new(|_| protocol_statistics())),
        (7, "determinism and runtime", Box::new(|_| determinism())),
        (8, "synthetic transfer", Box::new(synthetic_transfer)),
        (9, "alpha sweep", Box::new(alpha_sweep)),
        (10, "architecture", Box::new(|_| architecture())),
    ];
    let limits: BTreeMap<usize, f64> = [(1, 5.0), (2, 5.0), (4, 10.0)].into();
    let mut failed = 0;
    for (n, name, check) in criteria {
        if !picked.is_empty() && !picked.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let mut result = check(&mut runs);
        let secs = start.elapsed().as_secs_f64();
        if let (Ok(detail), Some(&limit)) = (&result, limits.get(&n)) {
            if secs >= limit {
                result = Err(format!("{detail}; took {secs:.2}s, limit {limit}s"));
            }
        }
        match result {
            Ok(detail) => println!("criterion {n:>2} PASS  {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
