use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dora_core::data::{save_manifest, DatasetManifest, Split};
use dora_core::synthetic::{SyntheticConfig, SyntheticData};

const TINY: &[&str] = &[
    "--set", "image_side=8",
    "--set", "patch_size=4",
    "--set", "channels=1",
    "--set", "d_model=8",
    "--set", "d_head=4",
    "--set", "visual_width=8",
    "--set", "textual_width=8",
    "--set", "max_length=4",
    "--set", "weight_decay=0",
    "--optimizer", "adam",
    "--lr", "0.01",
];

fn dora(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dora"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn corpus(dir: &Path, seed: u64, train: usize, valid: usize, test: usize) -> PathBuf {
    let data = SyntheticData::generate(&SyntheticConfig {
        train,
        valid,
        test,
        seed,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let m = data.write_corpus(dir, "syn").unwrap();
    let path = dir.join("manifest.jsonl");
    save_manifest(&m, &path).unwrap();
    path
}

fn train(manifest: &Path, out: &Path, epochs: &str) -> Output {
    let mut args = vec!["train", "--manifest", s(manifest), "--out", s(out), "--epochs", epochs];
    args.extend_from_slice(TINY);
    dora(&args)
}

#[test]
fn ingest_reports_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let good = corpus(&dir.path().join("c"), 0, 4, 2, 2);
    let o = dora(&["ingest", "--manifest", s(&good), "--out", s(&dir.path().join("i1"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("8 samples, 0 rejected"));

    let bad = dir.path().join("bad.jsonl");
    let mut text = fs::read_to_string(&good).unwrap();
    text.push_str("{\"id\":\"x\",\"image_ref\":\"x.png\",\"caption\":\"c\",\"task1\":\"MAYBE\"}\n");
    fs::write(&bad, text).unwrap();
    let out = dir.path().join("i2");
    let o = dora(&["ingest", "--manifest", s(&bad), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("8 samples, 1 rejected"));
    assert!(stderr(&o).contains("line 9"));
    let rejects = fs::read_to_string(out.join("rejects.jsonl")).unwrap();
    assert_eq!(rejects.lines().count(), 1);

    let o = dora(&["train", "--manifest", s(&bad), "--out", s(&dir.path().join("t"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("invalid record"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(dora(&["train", "--bogus"]).status.code(), Some(2));
    assert_eq!(
        dora(&["train", "--manifest", "m", "--out", "o", "--task", "3"]).status.code(),
        Some(2)
    );
    assert_eq!(dora(&["stats", "--manifest", "m", "--out", "o"]).status.code(), Some(2));
}

#[test]
fn missing_manifest_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = dora(&["train", "--manifest", "/nonexistent/m.jsonl", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn empty_valid_split_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path(), 0, 8, 0, 4);
    let o = train(&m, &dir.path().join("run"), "1");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("empty split"), "{}", stderr(&o));
}

#[test]
fn train_is_deterministic_and_eval_reads_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(&dir.path().join("c"), 3, 16, 8, 8);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = train(&m, out, "4");
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stdout(&o).contains("trained 4 epochs on 16 examples"));
    }
    for f in ["history.json", "best.ckpt", "vocab.txt", "config.txt", "run_spec.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let spec: serde_json::Value = serde_json::from_slice(&fs::read(a.join("run_spec.json")).unwrap()).unwrap();
    assert_eq!(spec["command"], "train");
    assert_eq!(spec["config"]["optimizer"], "ADAM");
    assert_eq!(spec["config"]["epochs"], "4");

    let e = dir.path().join("e");
    let o = dora(&["eval", "--run", s(&a), "--manifest", s(&m), "--split", "valid", "--out", s(&e)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("W.F1"));
    let preds = fs::read_to_string(e.join("predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 9);
    assert!(preds.starts_with("id,gold,prediction\n"));

    let history: serde_json::Value = serde_json::from_slice(&fs::read(a.join("history.json")).unwrap()).unwrap();
    let report: serde_json::Value = serde_json::from_slice(&fs::read(e.join("report.json")).unwrap()).unwrap();
    let best = history["best_epoch"].as_u64().unwrap() as usize;
    let recorded = history["epochs"][best - 1]["valid_weighted_f1"].as_f64().unwrap();
    let scored = report["weighted_f1"].as_f64().unwrap();
    assert!((recorded - scored).abs() < 1e-7, "{recorded} vs {scored}");

    // predictions written by eval feed straight back in
    let o = dora(&["eval", "--predictions", s(&e.join("predictions.csv")), "--task", "1", "--out", s(&dir.path().join("p"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let again: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("p/report.json")).unwrap()).unwrap();
    assert_eq!(again["weighted_f1"], report["weighted_f1"]);
}

#[test]
fn eval_predictions_hand_example() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("p.csv");
    fs::write(&csv, "prediction,gold\nHT,HT\nHT,NHT\nNHT,NHT\nNHT,NHT\n").unwrap();
    let o = dora(&["eval", "--predictions", s(&csv), "--task", "1", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("weighted F1 = 0.7667"), "{}", stdout(&o));

    fs::write(&csv, "prediction,gold\nHT,XX\n").unwrap();
    let o = dora(&["eval", "--predictions", s(&csv), "--task", "1", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn kappa_hand_example() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("a.csv");
    fs::write(&csv, "id,annotator_a,annotator_b\n1,H,H\n2,H,N\n3,N,N\n4,N,N\n5,H,H\n").unwrap();
    let o = dora(&["kappa", "--annotations", s(&csv), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("kappa = 0.6154 over 5 items"), "{text}");
    let json: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("kappa.json")).unwrap()).unwrap();
    assert!((json[0]["kappa"].as_f64().unwrap() - 8.0 / 13.0).abs() < 1e-12);
}

#[test]
fn split_then_stats() {
    let dir = tempfile::tempdir().unwrap();
    let pre = corpus(&dir.path().join("c"), 0, 20, 0, 0);
    let load = dora_core::data::load_manifest(&pre).unwrap().manifest;
    let unassigned = load.samples().iter().map(|x| x.clone().with_split(Split::Unassigned)).collect();
    let m = dir.path().join("c/unassigned.jsonl");
    save_manifest(&DatasetManifest::new("syn", "synthetic", unassigned).unwrap(), &m).unwrap();
    let out = dir.path().join("s");
    let o = dora(&["split", "--manifest", s(&m), "--out", s(&out), "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let load = dora_core::data::load_manifest(out.join("manifest.jsonl")).unwrap();
    assert_eq!(load.manifest.split(Split::Train).count(), 16);
    assert_eq!(load.manifest.split(Split::Valid).count(), 2);
    assert_eq!(load.manifest.split(Split::Test).count(), 2);

    let st = dir.path().join("st");
    let o = dora(&["stats", "--manifest", s(&m), "--split", "all", "--top-n", "3", "--out", s(&st)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(st.join("stats.json").exists());
    assert!(fs::read_to_string(st.join("stats.txt")).unwrap().contains("HT"));
}

#[test]
fn ablate_and_transfer_tables() {
    let dir = tempfile::tempdir().unwrap();
    let m1 = corpus(&dir.path().join("d1"), 1, 8, 4, 4);
    let m2 = corpus(&dir.path().join("d2"), 2, 8, 4, 4);

    let out = dir.path().join("abl");
    let mut args = vec!["ablate", "--manifest", s(&m1), "--out", s(&out), "--epochs", "2"];
    args.extend_from_slice(TINY);
    let o = dora(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().filter(|l| l.starts_with("DORA")).collect();
    assert_eq!(rows.len(), 7, "{text}");
    assert!(rows[6].starts_with("DORA "));
    assert!(rows[5].starts_with("DORA w/o VGAR + TGAR"));

    let (r1, r2) = (dir.path().join("r1"), dir.path().join("r2"));
    assert_eq!(train(&m1, &r1, "2").status.code(), Some(0));
    assert_eq!(train(&m2, &r2, "2").status.code(), Some(0));
    let t = dir.path().join("t");
    let run1 = format!("one={}", s(&r1));
    let run2 = format!("two={}", s(&r2));
    let test1 = format!("one={}", s(&m1));
    let test2 = format!("two={}", s(&m2));
    let o = dora(&[
        "transfer", "--run", &run1, "--run", &run2, "--test", &test1, "--test", &test2, "--out", s(&t),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_slice(&fs::read(t.join("transfer.json")).unwrap()).unwrap();
    assert_eq!(json["train_datasets"], serde_json::json!(["one", "two"]));
    assert_eq!(json["test_datasets"], serde_json::json!(["one", "two"]));
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert!(lines.iter().any(|l| l.starts_with("one ")));
    assert!(lines.iter().any(|l| l.starts_with("two ")));
}
