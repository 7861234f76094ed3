use ndarray::Array2;
use rand::Rng;

use super::attention::{AttentionCache, SelfAttentionLayer};
use super::{EncoderConfig, FeatureSequence, Modality};
use crate::error::{Error, Result};
use crate::ops::init_uniform;
use crate::params::{prefixed, prefixed_mut, ParamTree};

/// Token embedding + learned positions + `depth` self-attention layers.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEncoder {
    pub config: EncoderConfig,
    pub embedding: Array2<f64>,
    pub position: Array2<f64>,
    pub layers: Vec<SelfAttentionLayer>,
}

pub(crate) struct TextCache {
    tokens: Vec<usize>,
    layers: Vec<AttentionCache>,
}

impl TextEncoder {
    pub fn init<R: Rng + ?Sized>(rng: &mut R, config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        if config.modality != Modality::Textual {
            return Err(Error::invalid("text encoder needs a textual config"));
        }
        let d = config.output_width;
        let position = if config.positional {
            init_uniform(rng, config.max_length, d, d)
        } else {
            Array2::zeros((config.max_length, d))
        };
        Ok(TextEncoder {
            embedding: init_uniform(rng, config.vocab_size, d, d),
            position,
            layers: (0..config.depth)
                .map(|_| SelfAttentionLayer::init(rng, d))
                .collect(),
            config,
        })
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::invalid("token sequence is empty"));
        }
        if tokens.len() > self.config.max_length {
            return Err(Error::invalid(format!(
                "{} tokens exceed max_length {}",
                tokens.len(),
                self.config.max_length
            )));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::invalid(format!(
                "token id {bad} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    pub(crate) fn forward_cached(&self, tokens: &[usize]) -> Result<(Array2<f64>, TextCache)> {
        self.check_tokens(tokens)?;
        let d = self.config.output_width;
        let mut x = Array2::zeros((tokens.len(), d));
        for (i, &t) in tokens.iter().enumerate() {
            let mut row = x.row_mut(i);
            row += &self.embedding.row(t);
            if self.config.positional {
                row += &self.position.row(i);
            }
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, cache) = layer.forward_cached(&x);
            caches.push(cache);
            x = y;
        }
        Ok((
            x,
            TextCache {
                tokens: tokens.to_vec(),
                layers: caches,
            },
        ))
    }

    pub(crate) fn backward(&self, cache: &TextCache, dout: &Array2<f64>, grads: &mut TextEncoder) {
        let mut dx = dout.clone();
        for ((layer, lc), lg) in self
            .layers
            .iter()
            .zip(&cache.layers)
            .zip(grads.layers.iter_mut())
            .rev()
        {
            dx = layer.backward(lc, &dx, lg);
        }
        for (i, &t) in cache.tokens.iter().enumerate() {
            let mut e = grads.embedding.row_mut(t);
            e += &dx.row(i);
            if self.config.positional {
                let mut p = grads.position.row_mut(i);
                p += &dx.row(i);
            }
        }
    }
}

/// Encodes a token-id sequence into an `L_t x d` textual feature sequence.
pub fn encode_text(tokens: &[usize], encoder: &TextEncoder) -> Result<FeatureSequence> {
    let (x, _) = encoder.forward_cached(tokens)?;
    FeatureSequence::new(x, Modality::Textual)
}

impl ParamTree for TextEncoder {
    fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = vec![
            ("embedding".into(), &self.embedding),
            ("position".into(), &self.position),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            out.extend(prefixed(&format!("layer{i}"), l.tensors()));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let mut out = vec![
            ("embedding".into(), &mut self.embedding),
            ("position".into(), &mut self.position),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.extend(prefixed_mut(&format!("layer{i}"), l.tensors_mut()));
        }
        out
    }
}
