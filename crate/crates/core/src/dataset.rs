//! Turning manifest samples into model inputs.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::data::{DatasetManifest, MemeSample, Split, TaskId};
use crate::encoders::{load_image, FeatureAdapter, Tokenizer};
use crate::error::{Error, Result};
use crate::model::ModelInput;

/// One labelled model input with its split provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub split: Split,
    pub input: ModelInput,
    pub label: usize,
}

pub trait Featurizer: Sync {
    fn featurize(&self, sample: &MemeSample) -> Result<ModelInput>;
}

/// Pixels + token ids for the lightweight encoders.
#[derive(Debug, Clone)]
pub struct RawFeaturizer {
    /// Relative `image_ref`s are resolved against this directory.
    pub base_dir: PathBuf,
    pub image_side: usize,
    pub channels: usize,
    pub tokenizer: Tokenizer,
    pub max_length: usize,
}

impl Featurizer for RawFeaturizer {
    fn featurize(&self, sample: &MemeSample) -> Result<ModelInput> {
        let path = resolve(&self.base_dir, &sample.image_ref);
        let image = load_image(&path, self.image_side, self.channels)?;
        let tokens = self.tokenizer.encode(&sample.caption, self.max_length);
        if tokens.is_empty() {
            return Err(Error::invalid(format!("sample {} has no tokens", sample.id)));
        }
        Ok(ModelInput::Raw { image, tokens })
    }
}

/// Features from a pretrained-encoder adapter.
pub struct AdapterFeaturizer<A> {
    pub base_dir: PathBuf,
    pub adapter: A,
}

impl<A: FeatureAdapter> Featurizer for AdapterFeaturizer<A> {
    fn featurize(&self, sample: &MemeSample) -> Result<ModelInput> {
        let path = resolve(&self.base_dir, &sample.image_ref);
        Ok(ModelInput::Features {
            visual: self.adapter.encode_image(&path.to_string_lossy())?,
            textual: self.adapter.encode_text(&sample.caption)?,
        })
    }
}

fn resolve(base: &Path, image_ref: &str) -> PathBuf {
    let p = Path::new(image_ref);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Examples for one task and split. Samples without a label for the task
/// (non-hateful memes under task 2) are skipped.
pub fn examples_for_split(
    manifest: &DatasetManifest,
    task: TaskId,
    split: Split,
    featurizer: &dyn Featurizer,
) -> Result<Vec<Example>> {
    let samples: Vec<&MemeSample> = manifest
        .split(split)
        .filter(|s| task.class_index(&s.labels).is_some())
        .collect();
    samples
        .par_iter()
        .map(|s| {
            Ok(Example {
                id: s.id.clone(),
                split: s.split,
                input: featurizer.featurize(s)?,
                label: task.class_index(&s.labels).expect("filtered above"),
            })
        })
        .collect()
}
