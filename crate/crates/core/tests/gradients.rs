use dora_core::coattention::AblationVariant;
use dora_core::encoders::{EncoderConfig, FeatureSequence, Modality};
use dora_core::model::{DoraModel, Frontend, ModelConfig, ModelInput};
use dora_core::training::gradient_check;
use dora_core::{ParamTree, TaskId};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-6;
const TOL: f64 = 1e-4;

/// Random small lightweight-encoder instance: L_v, L_t <= 4, d_model <= 16.
fn random_instance(seed: u64) -> (DoraModel, ModelInput, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (side, patch) = [(2, 2), (4, 2), (2, 1)][rng.gen_range(0..3)];
    let channels = [1, 3][rng.gen_range(0..2)];
    let lt = rng.gen_range(1..=4);
    let vocab = rng.gen_range(5..20);
    let task = if rng.gen_bool(0.5) { TaskId::Detection } else { TaskId::Target };
    let mut cfg = ModelConfig::new(
        task,
        EncoderConfig::visual(rng.gen_range(2..=8), side, patch, channels),
        EncoderConfig::textual(rng.gen_range(2..=8), vocab, 4),
    );
    cfg.d_model = rng.gen_range(2..=16);
    cfg.d_head = rng.gen_range(1..=8);
    cfg.heads = 2;
    let model = DoraModel::init(cfg, seed).unwrap();
    let image = Array3::from_shape_simple_fn((side, side, channels), || rng.gen_range(0.0..1.0));
    let tokens = (0..lt).map(|_| rng.gen_range(0..vocab)).collect();
    let gold = rng.gen_range(0..task.class_count());
    (model, ModelInput::Raw { image, tokens }, gold)
}

fn check(model: &DoraModel, input: &ModelInput, gold: usize, seed: u64) -> f64 {
    let g = model.loss_and_gradient(input, gold, 1.0).unwrap();
    let report = gradient_check(|m: &DoraModel| m.loss(input, gold), model, &g.grads, EPS, 2000, seed).unwrap();
    assert!(
        report.max_relative_error < TOL,
        "seed {seed}: {} has relative error {}",
        report.worst_parameter,
        report.max_relative_error
    );
    report.max_relative_error
}

#[test]
fn full_pipeline_over_twenty_seeds() {
    for seed in 0..20 {
        let (model, input, gold) = random_instance(seed);
        check(&model, &input, gold, seed);
    }
}

#[test]
fn every_variant() {
    for (i, v) in AblationVariant::ALL.into_iter().enumerate() {
        let (mut model, input, gold) = random_instance(100 + i as u64);
        model.config.variant = v;
        let model = DoraModel::init(model.config.clone(), 7).unwrap();
        check(&model, &input, gold, i as u64);
    }
}

#[test]
fn deeper_encoders_without_positions() {
    let (model, input, gold) = random_instance(42);
    let mut cfg = model.config.clone();
    cfg.visual = cfg.visual.with_depth(2);
    cfg.textual = cfg.textual.with_depth(2);
    cfg.textual.positional = false;
    let model = DoraModel::init(cfg, 3).unwrap();
    check(&model, &input, gold, 3);
}

#[test]
fn adapter_frontend() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut cfg = ModelConfig::new(
        TaskId::Target,
        EncoderConfig::visual(5, 4, 2, 3),
        EncoderConfig::textual(6, 10, 4),
    );
    cfg.frontend = Frontend::Adapter {
        visual_input_width: 7,
        textual_input_width: 3,
    };
    cfg.d_model = 6;
    cfg.d_head = 3;
    let model = DoraModel::init(cfg, 1).unwrap();
    let input = ModelInput::Features {
        visual: FeatureSequence::new(
            Array2::from_shape_simple_fn((3, 7), || rng.gen_range(-1.0..1.0)),
            Modality::Visual,
        )
        .unwrap(),
        textual: FeatureSequence::new(
            Array2::from_shape_simple_fn((4, 3), || rng.gen_range(-1.0..1.0)),
            Modality::Textual,
        )
        .unwrap(),
    };
    check(&model, &input, 2, 1);
}

#[test]
fn frozen_encoders_get_no_gradient() {
    let (model, input, gold) = random_instance(5);
    let mut cfg = model.config.clone();
    cfg.visual.trainable = false;
    cfg.textual.trainable = false;
    let model = DoraModel::init(cfg, 5).unwrap();
    let g = model.loss_and_gradient(&input, gold, 1.0).unwrap();
    for ((name, t), trainable) in g.grads.tensors().into_iter().zip(model.trainable_mask()) {
        if !trainable {
            assert!(t.iter().all(|&v| v == 0.0), "{name} has a gradient");
        }
    }
}

#[test]
fn class_weight_scales_loss_and_gradient() {
    let (model, input, gold) = random_instance(11);
    let a = model.loss_and_gradient(&input, gold, 1.0).unwrap();
    let b = model.loss_and_gradient(&input, gold, 2.5).unwrap();
    assert!((b.loss - 2.5 * a.loss).abs() < 1e-12);
    for ((_, x), (_, y)) in a.grads.tensors().into_iter().zip(b.grads.tensors()) {
        for (p, q) in x.iter().zip(y.iter()) {
            assert!((q - 2.5 * p).abs() <= 1e-12 * (1.0 + p.abs()));
        }
    }
}
