mod data;
mod kappa;
mod model;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dora_core::data::{load_manifest, DatasetManifest};
use indexmap::IndexMap;
use serde::Serialize;

use crate::config::RunConfig;
use crate::{Common, ModelFlags};

pub use data::{ingest, split, stats};
pub use kappa::kappa;
pub use model::{ablate, eval, train, transfer};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 1;
pub const EXIT_COMPUTE: u8 = 3;

/// 1 for bad inputs, 3 for failed computations.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<dora_core::Error>() {
            return if err.is_input_error() { EXIT_INPUT } else { EXIT_COMPUTE };
        }
    }
    EXIT_INPUT
}

#[derive(Debug, Serialize)]
struct RunSpec<'a> {
    command: &'a str,
    inputs: IndexMap<String, String>,
    config: IndexMap<String, String>,
}

pub(crate) struct Output {
    dir: PathBuf,
}

impl Output {
    fn create(common: &Common) -> Result<Self> {
        fs::create_dir_all(&common.out)
            .with_context(|| format!("creating output directory {}", common.out.display()))?;
        Ok(Output {
            dir: common.out.clone(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, content: impl AsRef<[u8]>) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, content).with_context(|| format!("writing {}", path.display()))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    /// Records the command, its inputs and every resolved setting.
    fn write_spec(&self, command: &str, inputs: &[(&str, String)], config: &RunConfig) -> Result<()> {
        self.write_json(
            "run_spec.json",
            &RunSpec {
                command,
                inputs: inputs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
                config: config.to_map(),
            },
        )
    }
}

/// Defaults, then `--config`, then `--set` pairs, then the named flags.
fn resolve_config(common: &Common, flags: Option<&ModelFlags>) -> Result<RunConfig> {
    let mut overrides = common.overrides.clone();
    if let Some(seed) = common.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(f) = flags {
        let named = [
            ("task", f.task.map(|v| v.to_string())),
            ("variant", f.variant.clone()),
            ("epochs", f.epochs.map(|v| v.to_string())),
            ("batch_size", f.batch_size.map(|v| v.to_string())),
            ("learning_rate", f.lr.map(|v| v.to_string())),
            ("optimizer", f.optimizer.clone()),
        ];
        overrides.extend(named.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
    }
    RunConfig::resolve(common.config.as_deref(), &overrides)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

/// Loads a manifest that must have no rejected records. Relative image
/// references naming existing files are resolved against the manifest's
/// directory; anything else is kept as an opaque handle.
fn load_clean_manifest(path: &Path) -> Result<DatasetManifest> {
    let load = load_manifest(path)?;
    if let Some(r) = load.rejects.first() {
        bail!(
            "{} has {} invalid record(s); first at line {}: {} (run `dora ingest` for a report)",
            path.display(),
            load.rejects.len(),
            r.line,
            r.error
        );
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let m = load.manifest;
    let samples = m
        .samples()
        .iter()
        .map(|s| {
            let mut s = s.clone();
            let joined = base.join(&s.image_ref);
            if Path::new(&s.image_ref).is_relative() && joined.exists() {
                s.image_ref = display(&joined);
            }
            s
        })
        .collect();
    Ok(DatasetManifest::new(m.name.clone(), m.language_tag.clone(), samples)?)
}
