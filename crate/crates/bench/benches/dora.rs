use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dora_core::agreement::cohens_kappa;
use dora_core::coattention::{multi_head_co_attention, CoAttentionParams};
use dora_core::encoders::{FeatureSequence, Modality};
use dora_core::eval::compute_report;
use dora_core::model::DoraModel;
use dora_core::synthetic::{SyntheticConfig, SyntheticData};
use dora_core::TaskId;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn co_attention(c: &mut Criterion) {
    let mut group = c.benchmark_group("co_attention");
    for (lv, lt, d) in [(16, 16, 32), (49, 32, 64)] {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let xv = FeatureSequence::new(
            Array2::from_shape_simple_fn((lv, d), || rng.gen_range(-1.0..1.0)),
            Modality::Visual,
        )
        .unwrap();
        let xt = FeatureSequence::new(
            Array2::from_shape_simple_fn((lt, d), || rng.gen_range(-1.0..1.0)),
            Modality::Textual,
        )
        .unwrap();
        let params = CoAttentionParams::init(&mut rng, d, d, d, 2, d / 2).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(format!("{lv}x{lt}x{d}")), &(), |b, _| {
            b.iter(|| multi_head_co_attention(&xv, &xt, &params).unwrap())
        });
    }
    group.finish();
}

fn loss_and_gradient(c: &mut Criterion) {
    let data = SyntheticData::generate(&SyntheticConfig {
        train: 1,
        valid: 0,
        test: 0,
        image_side: 16,
        caption_length: 8,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let model = DoraModel::init(data.model_config(TaskId::Detection), 0).unwrap();
    let input = &data.train[0].input;
    c.bench_function("loss_and_gradient", |b| {
        b.iter(|| model.loss_and_gradient(input, 0, 1.0).unwrap())
    });
}

fn metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let preds: Vec<usize> = (0..10_000).map(|_| rng.gen_range(0..4)).collect();
    let golds: Vec<usize> = (0..10_000).map(|_| rng.gen_range(0..4)).collect();
    let labels = [0, 1, 2, 3];
    c.bench_function("compute_report_10k", |b| b.iter(|| compute_report(&preds, &golds, 4).unwrap()));
    c.bench_function("cohens_kappa_10k", |b| b.iter(|| cohens_kappa(&preds, &golds, &labels).unwrap()));
}

criterion_group!(benches, co_attention, loss_and_gradient, metrics);
criterion_main!(benches);
