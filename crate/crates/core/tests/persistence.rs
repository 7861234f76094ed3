use std::path::Path;

use dora_core::checkpoint::load_checkpoint;
use dora_core::data::{DatasetManifest, MemeSample, Split, TaskId};
use dora_core::dataset::Featurizer;
use dora_core::encoders::load_image;
use dora_core::eval::{compute_report, transfer_eval, CellOutcome, TransferSource, TransferTarget};
use dora_core::model::{DoraModel, ModelInput};
use dora_core::synthetic::{SyntheticConfig, SyntheticData};
use dora_core::training::{evaluate, train, OptimizerKind, TrainConfig};
use dora_core::{Error, ParamTree, Result};

fn quick_config() -> TrainConfig {
    TrainConfig {
        optimizer: OptimizerKind::Adam,
        learning_rate: 1e-2,
        epochs: 6,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn data(seed: u64) -> SyntheticData {
    SyntheticData::generate(&SyntheticConfig {
        train: 12,
        valid: 6,
        test: 6,
        seed,
        ..SyntheticConfig::default()
    })
    .unwrap()
}

#[test]
fn training_is_bit_reproducible() {
    let d = data(1);
    let run = || {
        let model = DoraModel::init(d.model_config(TaskId::Detection), 3).unwrap();
        train(model, &d.train, &d.valid, &quick_config(), None).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.history.to_json().unwrap(), b.history.to_json().unwrap());
    for (x, y) in a.history.epochs.iter().zip(&b.history.epochs) {
        assert_eq!(x.train_loss.to_bits(), y.train_loss.to_bits());
        assert_eq!(x.valid_weighted_f1.to_bits(), y.valid_weighted_f1.to_bits());
    }
    assert_eq!(a.last, b.last);
}

#[test]
fn checkpoint_reproduces_validation_score() {
    let d = data(2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("best.ckpt");
    let model = DoraModel::init(d.model_config(TaskId::Detection), 3).unwrap();
    let out = train(model, &d.train, &d.valid, &quick_config(), Some(&path)).unwrap();
    let (loaded, meta) = load_checkpoint(&path).unwrap();
    assert_eq!(loaded, out.best);
    assert_eq!(meta.epoch, Some(out.history.best_epoch));
    let recorded = out.history.best().valid_weighted_f1;
    assert_eq!(meta.valid_weighted_f1, Some(recorded));
    let again = evaluate(&loaded, &d.valid).unwrap().report.weighted_f1;
    assert!((again - recorded).abs() < 1e-7);
    for ((n, a), (_, b)) in loaded.tensors().into_iter().zip(out.best.tensors()) {
        assert_eq!(a, b, "{n}");
    }
}

#[test]
fn leaked_split_is_rejected() {
    let d = data(3);
    let model = DoraModel::init(d.model_config(TaskId::Detection), 0).unwrap();
    let err = train(model.clone(), &d.test, &d.valid, &quick_config(), None).unwrap_err();
    assert!(matches!(err, Error::SplitLeak { .. }));
    let err = train(model, &d.train, &[], &quick_config(), None).unwrap_err();
    assert!(matches!(err, Error::EmptySplit(_)));
}

/// Reads images from absolute paths and captions of the form `w3 w0 ...`.
struct SyntheticFeaturizer;

impl Featurizer for SyntheticFeaturizer {
    fn featurize(&self, s: &MemeSample) -> Result<ModelInput> {
        let tokens = s
            .caption
            .split_whitespace()
            .map(|w| w[1..].parse().unwrap())
            .collect();
        Ok(ModelInput::Raw {
            image: load_image(Path::new(&s.image_ref), 8, 1)?,
            tokens,
        })
    }
}

fn absolute(m: DatasetManifest, dir: &Path) -> DatasetManifest {
    let samples = m
        .samples()
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.image_ref = dir.join(&s.image_ref).to_string_lossy().into_owned();
            s
        })
        .collect();
    DatasetManifest::new(m.name.clone(), m.language_tag.clone(), samples).unwrap()
}

#[test]
fn transfer_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let mut sources = Vec::new();
    let mut targets = Vec::new();
    for (i, name) in ["alpha", "beta"].into_iter().enumerate() {
        let d = data(10 + i as u64);
        let img = dir.path().join(name);
        let m = absolute(d.write_corpus(&img, name).unwrap(), &img);
        let model = DoraModel::init(d.model_config(TaskId::Detection), 1).unwrap();
        let out = train(model, &d.train, &d.valid, &quick_config(), None).unwrap();
        sources.push(TransferSource {
            name: name.into(),
            model: out.best,
            featurizer: &SyntheticFeaturizer,
        });
        targets.push(TransferTarget::new(name, m, Split::Test));
    }
    let t = transfer_eval(&sources, &targets).unwrap();
    assert_eq!(t.cells.len(), 4);
    for i in 0..2 {
        for j in 0..2 {
            let cell = t.cell(i, j);
            assert_eq!(cell.train_dataset, t.train_datasets[i]);
            assert_eq!(cell.test_dataset, t.test_datasets[j]);
            let f1 = cell.weighted_f1().unwrap();
            assert!((0.0..=1.0).contains(&f1));
        }
    }
    // diagonal equals a direct report on the same pair
    let examples = dora_core::dataset::examples_for_split(
        &targets[0].manifest,
        TaskId::Detection,
        Split::Test,
        &SyntheticFeaturizer,
    )
    .unwrap();
    let preds: Vec<usize> = examples.iter().map(|e| sources[0].model.predict(&e.input).unwrap()).collect();
    let golds: Vec<usize> = examples.iter().map(|e| e.label).collect();
    let direct = compute_report(&preds, &golds, 2).unwrap();
    assert_eq!(t.cell(0, 0).weighted_f1(), Some(direct.weighted_f1));

    let table = t.to_table();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].contains("alpha") && lines[0].contains("beta"));
    assert!(lines[2].starts_with("alpha") && lines[3].starts_with("beta"));

    // a task 2 model has nothing to score on a task 1 only dataset
    let d = data(12);
    let mut cfg = d.model_config(TaskId::Target);
    cfg.task = TaskId::Target;
    let t2 = TransferSource {
        name: "targets".into(),
        model: DoraModel::init(cfg, 0).unwrap(),
        featurizer: &SyntheticFeaturizer,
    };
    let m = transfer_eval(&[t2], &targets[..1]).unwrap();
    assert!(matches!(m.cells[0].outcome, CellOutcome::Incompatible { .. }));
    assert!(m.to_table().contains("n/a"));
}
