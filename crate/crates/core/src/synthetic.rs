//! Small separable multimodal datasets for smoke tests and benchmarks.
//!
//! Class `c` brightens image patch `c` (mod the patch count) and puts token
//! `c` at a random position of the caption; every other token is filler.

use std::path::Path;

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{DatasetManifest, MemeSample, Split, Target, TaskId, TaskLabel};
use crate::dataset::Example;
use crate::encoders::EncoderConfig;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelInput};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    /// 2 for task 1, 4 for task 2.
    pub classes: usize,
    pub image_side: usize,
    pub patch_size: usize,
    pub channels: usize,
    pub caption_length: usize,
    pub filler_vocab: usize,
    /// Uniform pixel noise amplitude.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            train: 32,
            valid: 16,
            test: 16,
            classes: 2,
            image_side: 8,
            patch_size: 4,
            channels: 1,
            caption_length: 4,
            filler_vocab: 12,
            noise: 0.15,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn task(&self) -> Result<TaskId> {
        match self.classes {
            2 => Ok(TaskId::Detection),
            4 => Ok(TaskId::Target),
            c => Err(Error::invalid(format!("synthetic data supports 2 or 4 classes, not {c}"))),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.classes + self.filler_vocab
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub id: String,
    pub split: Split,
    pub label: usize,
    pub image: Array3<f64>,
    pub tokens: Vec<usize>,
}

impl SyntheticSample {
    /// Caption text: token `i` becomes the word `w{i}`.
    pub fn caption(&self) -> String {
        self.tokens
            .iter()
            .map(|t| format!("w{t}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn example(&self) -> Example {
        Example {
            id: self.id.clone(),
            split: self.split,
            input: ModelInput::Raw {
                image: self.image.clone(),
                tokens: self.tokens.clone(),
            },
            label: self.label,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub config: SyntheticConfig,
    pub samples: Vec<SyntheticSample>,
    pub train: Vec<Example>,
    pub valid: Vec<Example>,
    pub test: Vec<Example>,
}

impl SyntheticData {
    pub fn generate(config: &SyntheticConfig) -> Result<Self> {
        config.task()?;
        let probe = EncoderConfig::visual(1, config.image_side, config.patch_size, config.channels);
        probe.validate()?;
        if config.caption_length == 0 {
            return Err(Error::invalid("caption_length must be >= 1"));
        }
        if config.filler_vocab == 0 && config.caption_length > 1 {
            return Err(Error::invalid("filler_vocab must be >= 1 for captions longer than 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let per_side = config.image_side / config.patch_size;
        let patches = per_side * per_side;
        let mut samples = Vec::new();
        for (split, n) in [
            (Split::Train, config.train),
            (Split::Valid, config.valid),
            (Split::Test, config.test),
        ] {
            for i in 0..n {
                let label = i % config.classes;
                let bright = label % patches;
                let (gy, gx) = (bright / per_side, bright % per_side);
                let mut image = Array3::zeros((config.image_side, config.image_side, config.channels));
                for ((y, x, _), v) in image.indexed_iter_mut() {
                    let inside = y / config.patch_size == gy && x / config.patch_size == gx;
                    let base = if inside { 0.8 } else { 0.2 };
                    *v = (base + rng.gen_range(-config.noise..=config.noise)).clamp(0.0, 1.0);
                }
                let mut tokens: Vec<usize> = (0..config.caption_length)
                    .map(|_| config.classes + rng.gen_range(0..config.filler_vocab.max(1)))
                    .collect();
                tokens[rng.gen_range(0..config.caption_length)] = label;
                samples.push(SyntheticSample {
                    id: format!("{split}-{i:04}"),
                    split,
                    label,
                    image,
                    tokens,
                });
            }
        }
        let pick = |s: Split| {
            samples
                .iter()
                .filter(|x| x.split == s)
                .map(SyntheticSample::example)
                .collect::<Vec<_>>()
        };
        let (train, valid, test) = (pick(Split::Train), pick(Split::Valid), pick(Split::Test));
        Ok(SyntheticData {
            config: config.clone(),
            samples,
            train,
            valid,
            test,
        })
    }

    /// Lightweight-encoder model sized for this data: widths 8,
    /// `d_model = 8`, `d_head = 4`, two heads.
    pub fn model_config(&self, task: TaskId) -> ModelConfig {
        let c = &self.config;
        let mut m = ModelConfig::new(
            task,
            EncoderConfig::visual(8, c.image_side, c.patch_size, c.channels),
            EncoderConfig::textual(8, c.vocab_size(), c.caption_length),
        );
        m.d_model = 8;
        m.d_head = 4;
        m
    }

    /// Writes every image as a PNG under `image_dir` and returns a manifest
    /// referring to them by file name, with splits preassigned.
    pub fn write_corpus(&self, image_dir: &Path, name: &str) -> Result<DatasetManifest> {
        std::fs::create_dir_all(image_dir).map_err(|e| Error::io(image_dir, e))?;
        let task = self.config.task()?;
        let mut out = Vec::with_capacity(self.samples.len());
        for s in &self.samples {
            let file = format!("{}.png", s.id);
            let path = image_dir.join(&file);
            let side = self.config.image_side as u32;
            let bytes: Vec<u8> = s.image.iter().map(|v| (v * 255.0).round() as u8).collect();
            let saved = match self.config.channels {
                1 => ::image::GrayImage::from_raw(side, side, bytes).map(|i| i.save(&path)),
                3 => ::image::RgbImage::from_raw(side, side, bytes).map(|i| i.save(&path)),
                c => return Err(Error::invalid(format!("unsupported channel count {c}"))),
            };
            saved
                .expect("buffer sized from the image")
                .map_err(|e| Error::Image {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
            let labels = match task {
                TaskId::Detection => {
                    if s.label == 0 {
                        TaskLabel::hateful(None)
                    } else {
                        TaskLabel::not_hateful()
                    }
                }
                TaskId::Target => TaskLabel::hateful(Some(Target::ALL[s.label])),
            };
            debug_assert_eq!(task.class_index(&labels), Some(s.label));
            out.push(MemeSample::new(&s.id, &file, s.caption(), labels)?.with_split(s.split));
        }
        DatasetManifest::new(name, "synthetic", out)
    }
}

/// A manifest with `count` samples for every `(labels, split, count)` entry.
/// Ids are sequential; image references are placeholders.
pub fn manifest_from_counts(name: &str, rows: &[(TaskLabel, Split, usize)]) -> Result<DatasetManifest> {
    let mut samples = Vec::with_capacity(rows.iter().map(|r| r.2).sum());
    for &(labels, split, count) in rows {
        for _ in 0..count {
            let id = format!("{:06}", samples.len());
            let image = format!("{id}.png");
            samples.push(MemeSample::new(id, image, "caption", labels)?.with_split(split));
        }
    }
    DatasetManifest::new(name, "und", samples)
}
