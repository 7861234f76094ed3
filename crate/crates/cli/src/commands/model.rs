use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dora_core::checkpoint::load_checkpoint;
use dora_core::data::{DatasetManifest, Split, TaskId};
use dora_core::dataset::{examples_for_split, AdapterFeaturizer, Example, Featurizer, RawFeaturizer};
use dora_core::encoders::{CommandAdapter, Tokenizer};
use dora_core::eval::{compute_report, run_ablation, transfer_eval, AblationData, TransferSource, TransferTarget};
use dora_core::model::DoraModel;
use dora_core::training::{evaluate, train as fit};
use dora_core::AblationVariant;
use indexmap::IndexMap;
use serde::Deserialize;

use super::{display, load_clean_manifest, resolve_config, Output, EXIT_OK};
use crate::config::{ModelSettings, RunConfig};
use crate::{AblateArgs, EvalArgs, TrainArgs, TransferArgs};

const CHECKPOINT: &str = "best.ckpt";
const VOCAB: &str = "vocab.txt";

enum RunFeaturizer {
    Raw(RawFeaturizer),
    Adapter(AdapterFeaturizer<CommandAdapter>),
}

impl RunFeaturizer {
    fn new(settings: &ModelSettings, tokenizer: Option<Tokenizer>) -> Self {
        if settings.uses_adapter() {
            let mut adapter = CommandAdapter::new(&settings.adapter);
            adapter.args = settings.adapter_args.clone();
            RunFeaturizer::Adapter(AdapterFeaturizer {
                base_dir: PathBuf::new(),
                adapter,
            })
        } else {
            RunFeaturizer::Raw(RawFeaturizer {
                base_dir: PathBuf::new(),
                image_side: settings.image_side,
                channels: settings.channels,
                tokenizer: tokenizer.expect("built-in encoders need a tokenizer"),
                max_length: settings.max_length,
            })
        }
    }

    fn get(&self) -> &dyn Featurizer {
        match self {
            RunFeaturizer::Raw(f) => f,
            RunFeaturizer::Adapter(f) => f,
        }
    }
}

/// Tokenizer from the train captions (built-in encoders only) and the
/// matching model configuration.
fn prepare_model(cfg: &RunConfig, manifest: &DatasetManifest) -> (Option<Tokenizer>, dora_core::ModelConfig) {
    if cfg.model.uses_adapter() {
        return (None, cfg.model.model_config(1));
    }
    let tok = Tokenizer::build(
        manifest.split(Split::Train).map(|s| s.caption.as_str()),
        cfg.model.vocab_words,
    );
    let model_cfg = cfg.model.model_config(tok.vocab_size());
    (Some(tok), model_cfg)
}

fn examples(manifest: &DatasetManifest, task: TaskId, split: Split, f: &RunFeaturizer) -> Result<Vec<Example>> {
    examples_for_split(manifest, task, split, f.get()).with_context(|| format!("preparing the {split} split"))
}

pub fn train(args: TrainArgs) -> Result<u8> {
    let cfg = resolve_config(&args.common, Some(&args.model))?;
    let out = Output::create(&args.common)?;
    out.write_spec("train", &[("manifest", display(&args.manifest))], &cfg)?;
    out.write("config.txt", cfg.to_kv())?;

    let manifest = load_clean_manifest(&args.manifest)?;
    let (tokenizer, model_cfg) = prepare_model(&cfg, &manifest);
    if let Some(t) = &tokenizer {
        t.save(&out.path(VOCAB))?;
    }
    let featurizer = RunFeaturizer::new(&cfg.model, tokenizer);
    let task = cfg.model.task;
    let train_set = examples(&manifest, task, Split::Train, &featurizer)?;
    let valid_set = examples(&manifest, task, Split::Valid, &featurizer)?;

    let model = DoraModel::init(model_cfg, cfg.train.seed)?;
    let outcome = fit(model, &train_set, &valid_set, &cfg.train, Some(&out.path(CHECKPOINT)))?;
    out.write("history.json", outcome.history.to_json()? + "\n")?;
    let best = outcome.history.best();
    println!(
        "trained {} epochs on {} examples; best epoch {} with valid weighted F1 {:.4}",
        outcome.history.epochs.len(),
        train_set.len(),
        best.epoch,
        best.valid_weighted_f1
    );
    Ok(EXIT_OK)
}

#[derive(Deserialize)]
struct StoredSpec {
    config: IndexMap<String, String>,
}

struct LoadedRun {
    model: DoraModel,
    featurizer: RunFeaturizer,
}

fn load_run(dir: &Path) -> Result<LoadedRun> {
    let spec_path = dir.join("run_spec.json");
    let file = File::open(&spec_path).with_context(|| format!("opening {}", spec_path.display()))?;
    let spec: StoredSpec = serde_json::from_reader(file).with_context(|| format!("parsing {}", spec_path.display()))?;
    let cfg = RunConfig::from_map(&spec.config)?;
    let (model, _) = load_checkpoint(&dir.join(CHECKPOINT))?;
    let tokenizer = if cfg.model.uses_adapter() {
        None
    } else {
        Some(Tokenizer::load(&dir.join(VOCAB))?)
    };
    Ok(LoadedRun {
        model,
        featurizer: RunFeaturizer::new(&cfg.model, tokenizer),
    })
}

pub fn eval(args: EvalArgs) -> Result<u8> {
    let cfg = resolve_config(&args.common, None)?;
    let out = Output::create(&args.common)?;
    if let Some(run) = &args.run {
        let manifest_path = args.manifest.as_ref().expect("clap requires --manifest with --run");
        out.write_spec(
            "eval",
            &[
                ("run", display(run)),
                ("manifest", display(manifest_path)),
                ("split", args.split.clone()),
            ],
            &cfg,
        )?;
        let split: Split = args.split.parse()?;
        let loaded = load_run(run)?;
        let task = loaded.model.config.task;
        let manifest = load_clean_manifest(manifest_path)?;
        let set = examples(&manifest, task, split, &loaded.featurizer)?;
        if set.is_empty() {
            return Err(dora_core::Error::EmptySplit(split.to_string()).into());
        }
        let ev = evaluate(&loaded.model, &set)?;
        let names = task.class_names();
        let mut csv = String::from("id,gold,prediction\n");
        for (e, p) in set.iter().zip(&ev.predictions) {
            csv.push_str(&format!("{},{},{}\n", e.id, names[e.label], names[*p]));
        }
        out.write("predictions.csv", csv)?;
        finish_report(&out, ev.report.with_class_names(&names)?)
    } else {
        let path = args.predictions.as_ref().expect("clap requires --predictions without --run");
        let task = TaskId::try_from(args.task.unwrap_or(cfg.model.task.number()))?;
        out.write_spec(
            "eval",
            &[("predictions", display(path)), ("task", task.number().to_string())],
            &cfg,
        )?;
        let (preds, golds) = read_predictions(path, task)?;
        let names = task.class_names();
        let report = compute_report(&preds, &golds, task.class_count())?.with_class_names(&names)?;
        finish_report(&out, report)
    }
}

fn finish_report(out: &Output, report: dora_core::EvalReport) -> Result<u8> {
    out.write("report.json", report.to_json()? + "\n")?;
    let text = report.to_table();
    out.write("report.txt", &text)?;
    print!("{text}");
    println!("weighted F1 = {:.4}", report.weighted_f1);
    Ok(EXIT_OK)
}

fn read_predictions(path: &Path, task: TaskId) -> Result<(Vec<usize>, Vec<usize>)> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(p), Some(g)) = (col("prediction"), col("gold")) else {
        bail!("{} needs prediction and gold columns", path.display());
    };
    let names = task.class_names();
    let index = |v: &str, line: usize| {
        names
            .iter()
            .position(|n| *n == v)
            .with_context(|| format!("line {line}: {v:?} is not a task {} label", task.number()))
    };
    let (mut preds, mut golds) = (Vec::new(), Vec::new());
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        preds.push(index(record.get(p).unwrap_or(""), i + 2)?);
        golds.push(index(record.get(g).unwrap_or(""), i + 2)?);
    }
    Ok((preds, golds))
}

fn parse_variants(s: &str) -> Result<Vec<AblationVariant>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(AblationVariant::ALL.to_vec());
    }
    let v = s
        .split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| x.parse())
        .collect::<Result<Vec<AblationVariant>, _>>()?;
    if v.is_empty() {
        bail!("--variants is empty");
    }
    Ok(v)
}

pub fn ablate(args: AblateArgs) -> Result<u8> {
    let cfg = resolve_config(&args.common, Some(&args.model))?;
    let variants = parse_variants(&args.variants)?;
    let out = Output::create(&args.common)?;
    out.write_spec(
        "ablate",
        &[("manifest", display(&args.manifest)), ("variants", args.variants.clone())],
        &cfg,
    )?;
    let manifest = load_clean_manifest(&args.manifest)?;
    let (tokenizer, model_cfg) = prepare_model(&cfg, &manifest);
    let featurizer = RunFeaturizer::new(&cfg.model, tokenizer);
    let task = cfg.model.task;
    let train_set = examples(&manifest, task, Split::Train, &featurizer)?;
    let valid_set = examples(&manifest, task, Split::Valid, &featurizer)?;
    let test_set = examples(&manifest, task, Split::Test, &featurizer)?;
    let table = run_ablation(
        &AblationData {
            train: &train_set,
            valid: &valid_set,
            test: &test_set,
        },
        &model_cfg,
        &cfg.train,
        &variants,
    )?;
    out.write("ablation.json", table.to_json()? + "\n")?;
    let text = table.to_table();
    out.write("ablation.txt", &text)?;
    print!("{text}");
    Ok(EXIT_OK)
}

pub fn transfer(args: TransferArgs) -> Result<u8> {
    let cfg = resolve_config(&args.common, None)?;
    let split: Split = args.split.parse()?;
    let out = Output::create(&args.common)?;
    let mut inputs: Vec<(&str, String)> = args.runs.iter().map(|(n, p)| ("run", format!("{n}={}", display(p)))).collect();
    inputs.extend(args.tests.iter().map(|(n, p)| ("test", format!("{n}={}", display(p)))));
    inputs.push(("split", args.split.clone()));
    // keys repeat, so number them
    let numbered: Vec<(String, String)> = inputs
        .iter()
        .enumerate()
        .map(|(i, (k, v))| (format!("{k}.{i}"), v.clone()))
        .collect();
    let refs: Vec<(&str, String)> = numbered.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
    out.write_spec("transfer", &refs, &cfg)?;

    let runs = args
        .runs
        .iter()
        .map(|(name, dir)| load_run(dir).with_context(|| format!("loading run {name}")))
        .collect::<Result<Vec<_>>>()?;
    let sources: Vec<TransferSource<'_>> = args
        .runs
        .iter()
        .zip(&runs)
        .map(|((name, _), run)| TransferSource {
            name: name.clone(),
            model: run.model.clone(),
            featurizer: run.featurizer.get(),
        })
        .collect();
    let targets = args
        .tests
        .iter()
        .map(|(name, path)| Ok(TransferTarget::new(name.clone(), load_clean_manifest(path)?, split)))
        .collect::<Result<Vec<_>>>()?;
    let matrix = transfer_eval(&sources, &targets)?;
    out.write("transfer.json", matrix.to_json()? + "\n")?;
    let text = matrix.to_table();
    out.write("transfer.txt", &text)?;
    print!("{text}");
    Ok(EXIT_OK)
}
