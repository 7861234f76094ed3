//! Run settings: built-in defaults, then a `key = value` file, then flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dora_core::encoders::EncoderConfig;
use dora_core::model::{Frontend, ModelConfig};
use dora_core::training::{parse_kv, TrainConfig};
use dora_core::{AblationVariant, TaskId};
use indexmap::IndexMap;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSettings {
    pub task: TaskId,
    pub variant: AblationVariant,
    pub d_model: usize,
    pub d_head: usize,
    pub heads: usize,
    pub image_side: usize,
    pub patch_size: usize,
    pub channels: usize,
    pub visual_width: usize,
    pub textual_width: usize,
    pub max_length: usize,
    pub vocab_words: usize,
    pub depth: usize,
    pub positional: bool,
    pub train_visual: bool,
    pub train_textual: bool,
    /// External encoder program; empty selects the built-in encoders.
    pub adapter: String,
    pub adapter_args: Vec<String>,
    pub adapter_visual_width: usize,
    pub adapter_textual_width: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            task: TaskId::Detection,
            variant: AblationVariant::Full,
            d_model: 64,
            d_head: 32,
            heads: 2,
            image_side: 32,
            patch_size: 8,
            channels: 3,
            visual_width: 32,
            textual_width: 32,
            max_length: 32,
            vocab_words: 2000,
            depth: 1,
            positional: true,
            train_visual: true,
            train_textual: true,
            adapter: String::new(),
            adapter_args: Vec::new(),
            adapter_visual_width: 0,
            adapter_textual_width: 0,
        }
    }
}

impl ModelSettings {
    #[cfg(test)]
    const KEYS: [&'static str; 20] = [
        "task",
        "variant",
        "d_model",
        "d_head",
        "heads",
        "image_side",
        "patch_size",
        "channels",
        "visual_width",
        "textual_width",
        "max_length",
        "vocab_words",
        "depth",
        "positional",
        "train_visual",
        "train_textual",
        "adapter",
        "adapter_args",
        "adapter_visual_width",
        "adapter_textual_width",
    ];

    fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            v.parse().map_err(|e| anyhow::anyhow!("{key} = {v:?}: {e}"))
        }
        match key {
            "task" => self.task = TaskId::try_from(num::<u8>(key, value)?)?,
            "variant" => self.variant = value.parse()?,
            "d_model" => self.d_model = num(key, value)?,
            "d_head" => self.d_head = num(key, value)?,
            "heads" => self.heads = num(key, value)?,
            "image_side" => self.image_side = num(key, value)?,
            "patch_size" => self.patch_size = num(key, value)?,
            "channels" => self.channels = num(key, value)?,
            "visual_width" => self.visual_width = num(key, value)?,
            "textual_width" => self.textual_width = num(key, value)?,
            "max_length" => self.max_length = num(key, value)?,
            "vocab_words" => self.vocab_words = num(key, value)?,
            "depth" => self.depth = num(key, value)?,
            "positional" => self.positional = num(key, value)?,
            "train_visual" => self.train_visual = num(key, value)?,
            "train_textual" => self.train_textual = num(key, value)?,
            "adapter" => self.adapter = value.to_string(),
            "adapter_args" => self.adapter_args = value.split_whitespace().map(String::from).collect(),
            "adapter_visual_width" => self.adapter_visual_width = num(key, value)?,
            "adapter_textual_width" => self.adapter_textual_width = num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("task", self.task.number().to_string()),
            ("variant", self.variant.code().to_string()),
            ("d_model", self.d_model.to_string()),
            ("d_head", self.d_head.to_string()),
            ("heads", self.heads.to_string()),
            ("image_side", self.image_side.to_string()),
            ("patch_size", self.patch_size.to_string()),
            ("channels", self.channels.to_string()),
            ("visual_width", self.visual_width.to_string()),
            ("textual_width", self.textual_width.to_string()),
            ("max_length", self.max_length.to_string()),
            ("vocab_words", self.vocab_words.to_string()),
            ("depth", self.depth.to_string()),
            ("positional", self.positional.to_string()),
            ("train_visual", self.train_visual.to_string()),
            ("train_textual", self.train_textual.to_string()),
            ("adapter", self.adapter.clone()),
            ("adapter_args", self.adapter_args.join(" ")),
            ("adapter_visual_width", self.adapter_visual_width.to_string()),
            ("adapter_textual_width", self.adapter_textual_width.to_string()),
        ]
    }

    pub fn uses_adapter(&self) -> bool {
        !self.adapter.is_empty()
    }

    /// Model configuration; `vocab_size` comes from the tokenizer.
    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        let mut visual = EncoderConfig::visual(self.visual_width, self.image_side, self.patch_size, self.channels)
            .with_depth(self.depth);
        visual.positional = self.positional;
        visual.trainable = self.train_visual;
        let mut textual = EncoderConfig::textual(self.textual_width, vocab_size, self.max_length).with_depth(self.depth);
        textual.positional = self.positional;
        textual.trainable = self.train_textual;
        let mut cfg = ModelConfig::new(self.task, visual, textual);
        cfg.variant = self.variant;
        cfg.d_model = self.d_model;
        cfg.d_head = self.d_head;
        cfg.heads = self.heads;
        if self.uses_adapter() {
            cfg.frontend = Frontend::Adapter {
                visual_input_width: self.adapter_visual_width,
                textual_input_width: self.adapter_textual_width,
            };
        }
        cfg
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub model: ModelSettings,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if self.model.set(key, value)? {
            return Ok(());
        }
        self.train.set(key, value)?;
        Ok(())
    }

    /// Defaults, then `file`, then `overrides` in order.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            for (k, v) in parse_kv(&text)? {
                cfg.set(&k, &v)
                    .with_context(|| format!("in config {}", path.display()))?;
            }
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.train.validate()?;
        if cfg.model.uses_adapter() && (cfg.model.adapter_visual_width == 0 || cfg.model.adapter_textual_width == 0) {
            bail!("adapter_visual_width and adapter_textual_width are required with an adapter");
        }
        Ok(cfg)
    }

    /// Every key with its final value, in a fixed order.
    pub fn to_map(&self) -> IndexMap<String, String> {
        let mut map: IndexMap<String, String> = self
            .model
            .to_pairs()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        for (k, v) in parse_kv(&self.train.to_kv()).expect("own output parses") {
            map.insert(k, v);
        }
        map
    }

    pub fn to_kv(&self) -> String {
        self.to_map()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn from_map(map: &IndexMap<String, String>) -> Result<Self> {
        let pairs: Vec<(String, String)> = map.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        RunConfig::resolve(None, &pairs)
    }
}

/// `NAME=VALUE` argument.
pub fn parse_pair(s: &str) -> Result<(String, String), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=VALUE, got {s:?}"))?;
    if k.trim().is_empty() {
        return Err(format!("empty name in {s:?}"));
    }
    Ok((k.trim().to_string(), v.trim().to_string()))
}

pub fn parse_path_pair(s: &str) -> Result<(String, PathBuf), String> {
    parse_pair(s).map(|(k, v)| (k, PathBuf::from(v)))
}
