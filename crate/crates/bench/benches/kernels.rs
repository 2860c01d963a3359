use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use mhhfl::data::{generate_synthetic, window, SyntheticSpec};
use mhhfl::embed::{embed_data, embed_gradient};
use mhhfl::fed::{self, SourcePool};
use mhhfl::{ClientModel, EmbedKind, FeatureTensor, Normalizer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn setup(nf: usize) -> (ClientModel, Vec<FeatureTensor>) {
    let spec = SyntheticSpec {
        nf: vec![nf],
        runs: vec![3],
        ..SyntheticSpec::reference(Some(1))
    };
    let runs = generate_synthetic(&spec).unwrap().remove(0).runs;
    let refs: Vec<_> = runs.iter().collect();
    let norm = Normalizer::fit(&refs).unwrap();
    let samples: Vec<FeatureTensor> = runs.iter().flat_map(|r| window(r, 5, 0, &norm).unwrap()).collect();
    let model = ClientModel::new(0, 5, norm, 0.01, 7).unwrap();
    (model, samples)
}

fn bench_model(c: &mut Criterion) {
    let (model, samples) = setup(25);
    let batch: Vec<&FeatureTensor> = samples.iter().take(50).collect();
    c.bench_function("forward_client nf25 b50", |b| {
        b.iter(|| model.forward_client(black_box(&batch)).unwrap())
    });
    c.bench_function("train_batch nf25 b50", |b| {
        b.iter_batched(
            || model.clone(),
            |mut m| m.train_batch(&batch).unwrap(),
            BatchSize::SmallInput,
        )
    });
    let out = model.forward_client(&batch).unwrap();
    let c0: Vec<i8> = batch.iter().map(|s| s.c[0]).collect();
    let trace = &out.head_traces[0];
    c.bench_function("embed_gradient b50", |b| {
        b.iter(|| embed_gradient(black_box(trace), &c0).unwrap())
    });
    c.bench_function("embed_data b50", |b| {
        b.iter(|| embed_data(&model.heads[0], black_box(trace), &c0).unwrap())
    });
}

fn bench_selection(c: &mut Criterion) {
    let mut pool = SourcePool::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut target = None;
    for d in 0..4 {
        let (model, samples) = setup(if d == 0 { 25 } else { 19 });
        let batch: Vec<&FeatureTensor> = samples.iter().take(50).collect();
        let embs = mhhfl::harness::embed_heads(&model, &batch, EmbedKind::Gradient).unwrap();
        if d == 0 {
            target = Some((model.heads[0].clone(), embs[0]));
        }
        pool.begin_round();
        pool.share(d, model.snapshot_heads(), embs, EmbedKind::Gradient, 0.0, &mut rng)
            .unwrap();
    }
    let (head, emb) = target.unwrap();
    c.bench_function("select_single pool82", |b| {
        b.iter(|| fed::select_single(&pool, (0, 0), black_box(&emb)).unwrap())
    });
    c.bench_function("select_multiple pool82", |b| {
        b.iter(|| fed::select_multiple(&pool, (0, 0), black_box(&emb)))
    });
    let picked = fed::select_multiple(&pool, (0, 0), &emb);
    let weights = fed::blend_scale(&picked, &emb, false);
    c.bench_function("blend_update 4 sources", |b| {
        b.iter(|| fed::blend_update(black_box(&head), &picked, &weights, 0.1).unwrap())
    });
}

criterion_group!(benches, bench_model, bench_selection);
criterion_main!(benches);
