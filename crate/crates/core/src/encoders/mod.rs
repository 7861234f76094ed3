//! Per-modality feature extraction.
//!
//! The lightweight encoders here are small trainable transformers that emit
//! token-level feature sequences. Heavyweight pretrained encoders plug in
//! through [`FeatureAdapter`] and produce the same [`FeatureSequence`] type.

mod adapter;
mod attention;
mod image;
mod text;
mod tokenizer;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::{ensure_finite, ensure_shape};

pub use adapter::{
    read_feature_file, read_features, write_feature_file, write_features, CommandAdapter,
    FeatureAdapter,
};
pub use attention::SelfAttentionLayer;
pub use image::{encode_image, load_image, ImageEncoder};
pub use text::{encode_text, TextEncoder};
pub use tokenizer::Tokenizer;

pub(crate) use image::ImageCache;
pub(crate) use text::TextCache;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Visual,
    Textual,
}

/// An `L x d` matrix of token features from one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    values: Array2<f64>,
    modality: Modality,
}

impl FeatureSequence {
    pub fn new(values: Array2<f64>, modality: Modality) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::shape(format!(
                "feature sequence must be at least 1x1, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        ensure_finite("feature sequence", &values)?;
        Ok(FeatureSequence { values, modality })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub modality: Modality,
    pub output_width: usize,
    /// Visual only.
    pub patch_size: usize,
    /// Visual only; images are `image_side x image_side`.
    pub image_side: usize,
    /// Visual only: 1 (grey) or 3 (RGB).
    pub channels: usize,
    /// Textual only.
    pub vocab_size: usize,
    /// Textual only.
    pub max_length: usize,
    /// Number of self-attention layers.
    pub depth: usize,
    pub positional: bool,
    pub trainable: bool,
}

impl EncoderConfig {
    pub fn visual(output_width: usize, image_side: usize, patch_size: usize, channels: usize) -> Self {
        EncoderConfig {
            modality: Modality::Visual,
            output_width,
            patch_size,
            image_side,
            channels,
            vocab_size: 0,
            max_length: 0,
            depth: 1,
            positional: true,
            trainable: true,
        }
    }

    pub fn textual(output_width: usize, vocab_size: usize, max_length: usize) -> Self {
        EncoderConfig {
            modality: Modality::Textual,
            output_width,
            patch_size: 0,
            image_side: 0,
            channels: 0,
            vocab_size,
            max_length,
            depth: 1,
            positional: true,
            trainable: true,
        }
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = depth;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.output_width == 0 {
            return Err(Error::invalid("encoder output width must be >= 1"));
        }
        match self.modality {
            Modality::Visual => {
                if self.patch_size == 0 || self.image_side == 0 {
                    return Err(Error::invalid("patch_size and image_side must be >= 1"));
                }
                if !self.image_side.is_multiple_of(self.patch_size) {
                    return Err(Error::invalid(format!(
                        "image_side {} is not divisible by patch_size {}",
                        self.image_side, self.patch_size
                    )));
                }
                if !matches!(self.channels, 1 | 3) {
                    return Err(Error::invalid("channels must be 1 or 3"));
                }
            }
            Modality::Textual => {
                if self.max_length == 0 {
                    return Err(Error::invalid("max_length must be >= 1"));
                }
                if self.vocab_size == 0 {
                    return Err(Error::invalid("vocab_size must be >= 1"));
                }
            }
        }
        Ok(())
    }

    /// Sequence length the visual encoder produces.
    pub fn patch_count(&self) -> usize {
        let per_side = self.image_side / self.patch_size.max(1);
        per_side * per_side
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }
}

/// Maps a feature sequence to `target_width` columns: `X · W`.
pub fn project_features(
    features: &FeatureSequence,
    target_width: usize,
    projection: &Array2<f64>,
) -> Result<FeatureSequence> {
    ensure_shape("projection", projection, features.width(), target_width)?;
    FeatureSequence::new(features.values.dot(projection), features.modality)
}
