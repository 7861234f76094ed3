//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fail.

use std::collections::HashMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use dora_core::agreement::{cohens_kappa, per_label_kappa};
use dora_core::checkpoint::load_checkpoint;
use dora_core::coattention::{
    fuse, fusion_gradients, multi_head_co_attention, textual_axis_weights, visual_axis_weights,
    AblationVariant, CoAttentionParams, Component, ScoreMatrix,
};
use dora_core::data::{class_distribution, save_manifest, Split, Target, TaskId, TaskLabel};
use dora_core::encoders::{EncoderConfig, FeatureSequence, Modality};
use dora_core::eval::compute_report;
use dora_core::model::{DoraModel, ModelConfig, ModelInput};
use dora_core::synthetic::{manifest_from_counts, SyntheticConfig, SyntheticData};
use dora_core::training::{evaluate, gradient_check, train, OptimizerKind, TrainConfig};
use dora_core::ParamTree;
use ndarray::{Array1, Array2, Array3, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn c1_gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
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
        ensure!(cfg.variant == AblationVariant::Full, "default variant is {}", cfg.variant);
        let model = DoraModel::init(cfg, seed).map_err(|e| e.to_string())?;
        let image = Array3::from_shape_simple_fn((side, side, channels), || rng.gen_range(0.0..1.0));
        let tokens = (0..lt).map(|_| rng.gen_range(0..vocab)).collect();
        let input = ModelInput::Raw { image, tokens };
        let gold = rng.gen_range(0..task.class_count());
        let g = model.loss_and_gradient(&input, gold, 1.0).map_err(|e| e.to_string())?;
        let r = gradient_check(|m: &DoraModel| m.loss(&input, gold), &model, &g.grads, 1e-6, 2000, seed)
            .map_err(|e| e.to_string())?;
        ensure!(
            r.max_relative_error < 1e-4,
            "seed {seed}: {} relative error {:.3e}",
            r.worst_parameter,
            r.max_relative_error
        );
        worst = worst.max(r.max_relative_error);
    }
    let took = start.elapsed();
    ensure!(took < Duration::from_secs(120), "took {took:?}");
    Ok(format!("20 seeds, max relative error {worst:.2e}, {:.1}s", took.as_secs_f64()))
}

fn c2_mechanism_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..1000 {
        let (r, c) = (rng.gen_range(1..=12), rng.gen_range(1..=12));
        let scale = [1.0, 10.0, 50.0][case % 3];
        let s = Array2::from_shape_simple_fn((r, c), || rng.gen_range(-scale..scale));
        let scores = ScoreMatrix::new(s).map_err(|e| e.to_string())?;
        let (a_v, w_v) = visual_axis_weights(&scores);
        let (a_t, w_t) = textual_axis_weights(&scores);
        for col in a_v.columns() {
            ensure!((col.sum() - 1.0).abs() <= 1e-9, "case {case}: column sum {}", col.sum());
        }
        for row in a_t.rows() {
            ensure!((row.sum() - 1.0).abs() <= 1e-9, "case {case}: row sum {}", row.sum());
        }
        ensure!((w_v.sum() - 1.0).abs() <= 1e-9, "case {case}: sum w_v {}", w_v.sum());
        ensure!((w_t.sum() - 1.0).abs() <= 1e-9, "case {case}: sum w_t {}", w_t.sum());
    }
    let seq = |x: Array2<f64>, m| FeatureSequence::new(x, m).unwrap();
    let cases = 200;
    for case in 0..cases {
        let (lv, lt) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        let xv = Array2::from_shape_simple_fn((lv, 5), || rng.gen_range(-1.0..1.0));
        let xt = Array2::from_shape_simple_fn((lt, 4), || rng.gen_range(-1.0..1.0));
        let params = CoAttentionParams::init(&mut rng, 5, 4, 3, 2, 6).map_err(|e| e.to_string())?;
        let mut p: Vec<usize> = (0..lv).collect();
        let mut q: Vec<usize> = (0..lt).collect();
        p.shuffle(&mut rng);
        q.shuffle(&mut rng);
        let (vgar, tgar) = multi_head_co_attention(
            &seq(xv.clone(), Modality::Visual),
            &seq(xt.clone(), Modality::Textual),
            &params,
        )
        .map_err(|e| e.to_string())?;
        let (vgar_p, tgar_p) = multi_head_co_attention(
            &seq(xv.select(Axis(0), &p), Modality::Visual),
            &seq(xt.select(Axis(0), &q), Modality::Textual),
            &params,
        )
        .map_err(|e| e.to_string())?;
        ensure!(vgar.select(Axis(0), &p) == vgar_p, "case {case}: VGAR not equivariant");
        ensure!(tgar.select(Axis(0), &q) == tgar_p, "case {case}: TGAR not equivariant");
    }
    Ok(format!("1000 score matrices, {cases} exact permutation checks"))
}

fn c3_ablation() -> Outcome {
    let expected = [
        (AblationVariant::Full, 32),
        (AblationVariant::NoVf, 24),
        (AblationVariant::NoTf, 24),
        (AblationVariant::NoVfTf, 16),
        (AblationVariant::NoVgar, 24),
        (AblationVariant::NoTgar, 24),
        (AblationVariant::NoVgarTgar, 16),
    ];
    ensure!(AblationVariant::ALL.len() == 7, "{} variants", AblationVariant::ALL.len());
    let data = SyntheticData::generate(&SyntheticConfig {
        train: 1,
        valid: 0,
        test: 0,
        ..SyntheticConfig::default()
    })
    .map_err(|e| e.to_string())?;
    for (v, width) in expected {
        let mut cfg = data.model_config(TaskId::Detection);
        cfg.variant = v;
        let model = DoraModel::init(cfg, 0).map_err(|e| e.to_string())?;
        let fused = model.fused(&data.train[0].input).map_err(|e| e.to_string())?;
        ensure!(fused.width() == width, "{v}: fused width {} != {width}", fused.width());
        ensure!(model.head.input_width() == width, "{v}: head width {}", model.head.input_width());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xv = FeatureSequence::new(Array2::from_shape_simple_fn((3, 8), || rng.gen_range(-1.0..1.0)), Modality::Visual)
        .map_err(|e| e.to_string())?;
    let xt = FeatureSequence::new(Array2::from_shape_simple_fn((5, 8), || rng.gen_range(-1.0..1.0)), Modality::Textual)
        .map_err(|e| e.to_string())?;
    let params = CoAttentionParams::init(&mut rng, 8, 8, 4, 2, 8).map_err(|e| e.to_string())?;
    let (vgar, tgar) = multi_head_co_attention(&xv, &xt, &params).map_err(|e| e.to_string())?;
    for v in AblationVariant::ALL {
        let width = fuse(&vgar, &tgar, &xv, &xt, v).map_err(|e| e.to_string())?.width();
        let dfused = Array1::from_shape_fn(width, |i| 0.5 + i as f64);
        let grads = fusion_gradients(&vgar, &tgar, &xv, &xt, v, &dfused).map_err(|e| e.to_string())?;
        for (c, g) in Component::ORDER.iter().zip(&grads) {
            let zero = g.iter().all(|&x| x == 0.0);
            ensure!(zero != v.includes(*c), "{v}: gradient for {} zero = {zero}", c.name());
        }
    }
    Ok("7 variants, widths 32/24/24/16/24/24/16, excluded gradients exactly 0".into())
}

fn c4_learnability() -> Outcome {
    let start = Instant::now();
    let config = |seed| TrainConfig {
        optimizer: OptimizerKind::Adam,
        learning_rate: 1e-2,
        weight_decay: 0.0,
        batch_size: 4,
        epochs: 200,
        seed,
        ..TrainConfig::default()
    };
    let mut wins = 0;
    let mut min_acc = 1.0f64;
    for seed in 0..5u64 {
        let data = SyntheticData::generate(&SyntheticConfig {
            seed,
            ..SyntheticConfig::default()
        })
        .map_err(|e| e.to_string())?;
        ensure!(data.train.len() == 32 && data.valid.len() == 16, "dataset sizes");
        let run = |v: AblationVariant| {
            let mut cfg = data.model_config(TaskId::Detection);
            cfg.variant = v;
            let model = DoraModel::init(cfg, seed).map_err(|e| e.to_string())?;
            let out = train(model, &data.train, &data.valid, &config(seed), None).map_err(|e| e.to_string())?;
            let acc = evaluate(&out.last, &data.train).map_err(|e| e.to_string())?.report.accuracy;
            let f1 = evaluate(&out.last, &data.valid).map_err(|e| e.to_string())?.report.weighted_f1;
            Ok::<_, String>((acc, f1))
        };
        let (acc, full) = run(AblationVariant::Full)?;
        let (_, reduced) = run(AblationVariant::NoVgarTgar)?;
        ensure!(acc >= 0.95, "seed {seed}: train accuracy {acc}");
        min_acc = min_acc.min(acc);
        if full >= reduced {
            wins += 1;
        }
    }
    let took = start.elapsed();
    ensure!(wins >= 3, "FULL >= NO_VGAR_TGAR on only {wins}/5 seeds");
    ensure!(took < Duration::from_secs(300), "took {took:?}");
    Ok(format!(
        "min train accuracy {min_acc:.3}, FULL >= reduced on {wins}/5 seeds, {:.1}s",
        took.as_secs_f64()
    ))
}

fn brute_force_report(preds: &[usize], golds: &[usize], c: usize) -> (f64, f64, f64) {
    let n = golds.len() as f64;
    let (mut weighted, mut macro_sum, mut correct) = (0.0, 0.0, 0.0);
    for k in 0..c {
        let mut tp = 0.0;
        let mut fp = 0.0;
        let mut fn_ = 0.0;
        for (&p, &g) in preds.iter().zip(golds) {
            match (p == k, g == k) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fn_ += 1.0,
                _ => {}
            }
        }
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        weighted += f1 * (tp + fn_) / n;
        macro_sum += f1;
        correct += tp;
    }
    (weighted, macro_sum / c as f64, correct / n)
}

fn c5_metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..1000 {
        let c = rng.gen_range(2..=6);
        let n = rng.gen_range(1..=50);
        let preds: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
        let golds: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
        let r = compute_report(&preds, &golds, c).map_err(|e| e.to_string())?;
        let (w, m, acc) = brute_force_report(&preds, &golds, c);
        ensure!((r.weighted_f1 - w).abs() <= 1e-12, "case {case}: weighted {} vs {w}", r.weighted_f1);
        ensure!((r.macro_f1 - m).abs() <= 1e-12, "case {case}: macro {} vs {m}", r.macro_f1);
        ensure!((r.accuracy - acc).abs() <= 1e-12, "case {case}: accuracy");
    }
    let r = compute_report(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).map_err(|e| e.to_string())?;
    ensure!((r.weighted_f1 - 23.0 / 30.0).abs() < 1e-12, "hand weighted F1 {}", r.weighted_f1);
    ensure!((r.macro_f1 - 11.0 / 15.0).abs() < 1e-12, "hand macro F1 {}", r.macro_f1);
    Ok(format!("1000 random cases; hand example W.F1 {:.4}, Ma.F1 {:.4}", r.weighted_f1, r.macro_f1))
}

fn contingency_kappa(a: &[usize], b: &[usize], k: usize) -> f64 {
    let n = a.len() as f64;
    let mut table = vec![vec![0.0; k]; k];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1.0;
    }
    let po: f64 = (0..k).map(|i| table[i][i]).sum::<f64>() / n;
    let pe: f64 = (0..k)
        .map(|i| {
            let row: f64 = table[i].iter().sum();
            let col: f64 = table.iter().map(|r| r[i]).sum();
            row * col
        })
        .sum::<f64>()
        / (n * n);
    if pe == 1.0 {
        return 1.0;
    }
    (po - pe) / (1.0 - pe)
}

fn c6_kappa_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut checked = 0;
    while checked < 1000 {
        let k = rng.gen_range(2..=4);
        let n = rng.gen_range(1..=12);
        let a: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let labels: Vec<usize> = (0..k).collect();
        let oracle = contingency_kappa(&a, &b, k);
        match cohens_kappa(&a, &b, &labels) {
            Ok(kappa) => {
                ensure!((kappa - oracle).abs() <= 1e-12, "case {checked}: {kappa} vs {oracle}");
                let swapped = cohens_kappa(&b, &a, &labels).map_err(|e| e.to_string())?;
                ensure!(kappa.to_bits() == swapped.to_bits(), "case {checked}: asymmetric {kappa} {swapped}");
            }
            // both annotators used one identical label but disagreed; undefined
            Err(_) => ensure!(a != b, "case {checked}: error on identical sequences"),
        }
        checked += 1;
    }
    let a = ["H", "H", "N", "N", "H"];
    let b = ["H", "N", "N", "N", "H"];
    let k = cohens_kappa(&a, &b, &["H", "N"]).map_err(|e| e.to_string())?;
    ensure!((k - 8.0 / 13.0).abs() <= 1e-12, "hand example {k}");
    let r = per_label_kappa(&a, &b, &["H", "N"]).map_err(|e| e.to_string())?;
    ensure!((r.average - 8.0 / 13.0).abs() <= 1e-12, "per-label average {}", r.average);
    Ok(format!("1000 random cases, exact symmetry; hand example {k:.6}"))
}

fn c7_data_plumbing() -> Outcome {
    let ht = |t| TaskLabel::hateful(Some(t));
    let nht = TaskLabel::not_hateful();
    let mut rows = Vec::new();
    for (split, ti, to, tc, ts, n) in [
        (Split::Train, 1623, 160, 249, 85, 3641),
        (Split::Valid, 192, 17, 24, 8, 399),
        (Split::Test, 193, 27, 37, 9, 445),
    ] {
        rows.push((ht(Target::Individual), split, ti));
        rows.push((ht(Target::Organization), split, to));
        rows.push((ht(Target::Community), split, tc));
        rows.push((ht(Target::Society), split, ts));
        rows.push((nht, split, n));
    }
    let m = manifest_from_counts("replica", &rows).map_err(|e| e.to_string())?;
    let t1 = class_distribution(&m, TaskId::Detection, Some(Split::Train));
    ensure!(t1["HT"] == 2117 && t1["NHT"] == 3641, "task 1 train {t1:?}");
    let t2 = class_distribution(&m, TaskId::Target, Some(Split::Train));
    let got: Vec<(&str, usize)> = t2.iter().map(|(k, v)| (*k, *v)).collect();
    ensure!(
        got == [("TI", 1623), ("TO", 160), ("TC", 249), ("TS", 85)],
        "task 2 train {got:?}"
    );
    Ok("train HT 2117 / NHT 3641; TI 1623 / TO 160 / TC 249 / TS 85".into())
}

fn c8_determinism() -> Outcome {
    let data = SyntheticData::generate(&SyntheticConfig {
        train: 12,
        valid: 6,
        test: 6,
        seed: 8,
        ..SyntheticConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let config = TrainConfig {
        optimizer: OptimizerKind::Adam,
        learning_rate: 1e-2,
        epochs: 6,
        seed: 8,
        ..TrainConfig::default()
    };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("best.ckpt");
    let run = |ckpt: Option<&Path>| {
        let model = DoraModel::init(data.model_config(TaskId::Detection), 8).map_err(|e| e.to_string())?;
        train(model, &data.train, &data.valid, &config, ckpt).map_err(|e| e.to_string())
    };
    let a = run(Some(&path))?;
    let b = run(None)?;
    ensure!(a.history.epochs.len() == b.history.epochs.len(), "epoch counts differ");
    for (x, y) in a.history.epochs.iter().zip(&b.history.epochs) {
        ensure!(
            x.train_loss.to_bits() == y.train_loss.to_bits()
                && x.valid_weighted_f1.to_bits() == y.valid_weighted_f1.to_bits(),
            "epoch {} differs",
            x.epoch
        );
    }
    ensure!(a.last == b.last, "final parameters differ");

    let (loaded, _) = load_checkpoint(&path).map_err(|e| e.to_string())?;
    for ((name, x), (_, y)) in loaded.tensors().into_iter().zip(a.best.tensors()) {
        ensure!(x == y, "{name} differs after reload");
    }
    let recorded = a.history.best().valid_weighted_f1;
    let again = evaluate(&loaded, &data.valid).map_err(|e| e.to_string())?.report.weighted_f1;
    ensure!((again - recorded).abs() < 1e-7, "recorded {recorded}, reloaded {again}");
    Ok(format!(
        "{} epochs bit-identical; reloaded valid W.F1 {again:.4}",
        a.history.epochs.len()
    ))
}

fn dora(args: &[&str]) -> Result<String, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_dora"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!("dora {} failed: {}", args[0], String::from_utf8_lossy(&o.stderr)));
    }
    Ok(String::from_utf8_lossy(&o.stdout).into_owned())
}

fn corpus(dir: &Path, seed: u64) -> Result<String, String> {
    let data = SyntheticData::generate(&SyntheticConfig {
        train: 8,
        valid: 4,
        test: 4,
        seed,
        ..SyntheticConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let m = data.write_corpus(dir, "syn").map_err(|e| e.to_string())?;
    let path = dir.join("manifest.jsonl");
    save_manifest(&m, &path).map_err(|e| e.to_string())?;
    Ok(path.to_string_lossy().into_owned())
}

fn c9_report_shapes() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let tiny = [
        "--set", "image_side=8", "--set", "patch_size=4", "--set", "channels=1",
        "--set", "d_model=8", "--set", "d_head=4", "--set", "visual_width=8",
        "--set", "textual_width=8", "--set", "max_length=4", "--optimizer", "adam",
        "--lr", "0.01", "--epochs", "2",
    ];
    let m1 = corpus(&dir.path().join("one"), 1)?;
    let m2 = corpus(&dir.path().join("two"), 2)?;

    let mut args = vec!["ablate", "--manifest", &m1, "--out"];
    let abl = p("abl");
    args.push(&abl);
    args.extend(tiny);
    let text = dora(&args)?;
    let names: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with("DORA"))
        .map(|l| l.split('|').next().unwrap().trim())
        .collect();
    let expected = [
        "DORA w/o VF",
        "DORA w/o TF",
        "DORA w/o VF+TF",
        "DORA w/o VGAR",
        "DORA w/o TGAR",
        "DORA w/o VGAR + TGAR",
        "DORA",
    ];
    ensure!(names == expected, "ablation rows {names:?}");

    let (r1, r2) = (p("r1"), p("r2"));
    for (m, r) in [(&m1, &r1), (&m2, &r2)] {
        let mut args = vec!["train", "--manifest", m.as_str(), "--out", r.as_str()];
        args.extend(tiny);
        dora(&args)?;
    }
    let (run1, run2) = (format!("one={r1}"), format!("two={r2}"));
    let (test1, test2) = (format!("one={m1}"), format!("two={m2}"));
    let tr = p("transfer");
    let text = dora(&["transfer", "--run", &run1, "--run", &run2, "--test", &test1, "--test", &test2, "--out", &tr])?;
    let lines: Vec<&str> = text.lines().collect();
    let cells = |l: &str| l.split('|').map(str::trim).map(String::from).collect::<Vec<_>>();
    ensure!(lines.len() == 4, "transfer table has {} lines", lines.len());
    ensure!(cells(lines[0])[1..] == ["one", "two"], "columns {:?}", cells(lines[0]));
    for (line, name) in [(lines[2], "one"), (lines[3], "two")] {
        let row = cells(line);
        ensure!(row[0] == name && row.len() == 3, "row {row:?}");
        ensure!(row[1..].iter().all(|v| v.parse::<f64>().is_ok()), "row {row:?}");
    }

    let csv = dir.path().join("ann.csv");
    fs::write(
        &csv,
        "id,annotator_a,annotator_b,task\n1,HT,HT,1\n2,HT,NHT,1\n3,NHT,NHT,1\n4,NHT,NHT,1\n5,HT,HT,1\n\
         1,TI,TI,2\n2,TO,TC,2\n3,TC,TC,2\n4,TS,TS,2\n5,TI,TO,2\n",
    )
    .map_err(|e| e.to_string())?;
    let k = p("kappa");
    let text = dora(&["kappa", "--annotations", &csv.to_string_lossy(), "--out", &k])?;
    let mut per_task: HashMap<String, (Vec<String>, usize)> = HashMap::new();
    let mut task = String::new();
    for line in text.lines().skip(2).take_while(|l| !l.is_empty()) {
        if line.starts_with('-') {
            continue;
        }
        let c = cells(line);
        ensure!(c.len() == 4, "kappa row {c:?}");
        if !c[0].is_empty() {
            task = c[0].clone();
        }
        let entry = per_task.entry(task.clone()).or_default();
        entry.0.push(c[1].clone());
        if !c[3].is_empty() {
            entry.1 += 1;
        }
    }
    ensure!(per_task["Task 1"].0 == ["HT", "NHT"], "task 1 labels {:?}", per_task["Task 1"].0);
    ensure!(
        per_task["Task 2"].0 == ["TI", "TO", "TC", "TS"],
        "task 2 labels {:?}",
        per_task["Task 2"].0
    );
    ensure!(per_task.values().all(|v| v.1 == 1), "one average per task");
    Ok("7 ablation rows, 2x2 transfer matrix, per-label kappa with averages".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient fidelity", c1_gradient_fidelity),
        ("mechanism invariants", c2_mechanism_invariants),
        ("ablation correctness", c3_ablation),
        ("learnability", c4_learnability),
        ("metric oracles", c5_metric_oracles),
        ("kappa oracle", c6_kappa_oracle),
        ("data plumbing", c7_data_plumbing),
        ("determinism and persistence", c8_determinism),
        ("report shapes", c9_report_shapes),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {why}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
