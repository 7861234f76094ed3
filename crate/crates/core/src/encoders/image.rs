use std::path::Path;

use ndarray::{Array2, Array3};
use rand::Rng;

use super::attention::{AttentionCache, SelfAttentionLayer};
use super::{EncoderConfig, FeatureSequence, Modality};
use crate::error::{Error, Result};
use crate::ops::init_uniform;
use crate::params::{prefixed, prefixed_mut, ParamTree};

/// Patch-embedding vision encoder: linear patch projection, learned
/// positions, then `depth` self-attention layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageEncoder {
    pub config: EncoderConfig,
    pub patch_embed: Array2<f64>,
    pub patch_bias: Array2<f64>,
    pub position: Array2<f64>,
    pub layers: Vec<SelfAttentionLayer>,
}

pub(crate) struct ImageCache {
    patches: Array2<f64>,
    layers: Vec<AttentionCache>,
}

impl ImageEncoder {
    pub fn init<R: Rng + ?Sized>(rng: &mut R, config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        if config.modality != Modality::Visual {
            return Err(Error::invalid("image encoder needs a visual config"));
        }
        let d = config.output_width;
        let pd = config.patch_dim();
        let position = if config.positional {
            init_uniform(rng, config.patch_count(), d, d)
        } else {
            Array2::zeros((config.patch_count(), d))
        };
        Ok(ImageEncoder {
            patch_embed: init_uniform(rng, pd, d, pd),
            patch_bias: Array2::zeros((1, d)),
            position,
            layers: (0..config.depth)
                .map(|_| SelfAttentionLayer::init(rng, d))
                .collect(),
            config,
        })
    }

    /// Flattens an `H x W x C` image into one row per patch, patches in
    /// row-major grid order, each patch flattened as (row, col, channel).
    pub fn patchify(&self, image: &Array3<f64>) -> Result<Array2<f64>> {
        let cfg = &self.config;
        let (h, w, c) = image.dim();
        if h != cfg.image_side || w != cfg.image_side || c != cfg.channels {
            return Err(Error::shape(format!(
                "image is {h}x{w}x{c}, encoder expects {0}x{0}x{1}",
                cfg.image_side, cfg.channels
            )));
        }
        if image.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image pixels".into()));
        }
        let p = cfg.patch_size;
        let per_side = cfg.image_side / p;
        let mut patches = Array2::zeros((per_side * per_side, cfg.patch_dim()));
        for gy in 0..per_side {
            for gx in 0..per_side {
                let mut row = patches.row_mut(gy * per_side + gx);
                let mut k = 0;
                for y in 0..p {
                    for x in 0..p {
                        for ch in 0..c {
                            row[k] = image[[gy * p + y, gx * p + x, ch]];
                            k += 1;
                        }
                    }
                }
            }
        }
        Ok(patches)
    }

    pub(crate) fn forward_cached(&self, image: &Array3<f64>) -> Result<(Array2<f64>, ImageCache)> {
        let patches = self.patchify(image)?;
        let mut x = patches.dot(&self.patch_embed) + &self.patch_bias;
        if self.config.positional {
            x += &self.position;
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, cache) = layer.forward_cached(&x);
            caches.push(cache);
            x = y;
        }
        Ok((
            x,
            ImageCache {
                patches,
                layers: caches,
            },
        ))
    }

    pub(crate) fn backward(&self, cache: &ImageCache, dout: &Array2<f64>, grads: &mut ImageEncoder) {
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
        grads.patch_embed += &cache.patches.t().dot(&dx);
        grads.patch_bias += &dx.sum_axis(ndarray::Axis(0)).insert_axis(ndarray::Axis(0));
        if self.config.positional {
            grads.position += &dx;
        }
    }
}

/// Encodes an `image_side x image_side x channels` image with pixels in `[0, 1]`.
pub fn encode_image(image: &Array3<f64>, encoder: &ImageEncoder) -> Result<FeatureSequence> {
    if image.iter().any(|v| v.is_finite() && !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("pixel values must be normalised to [0, 1]"));
    }
    let (x, _) = encoder.forward_cached(image)?;
    FeatureSequence::new(x, Modality::Visual)
}

/// Loads an image file, resizes it to `side x side` and scales to `[0, 1]`.
pub fn load_image(path: &Path, side: usize, channels: usize) -> Result<Array3<f64>> {
    let img = ::image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let side32 = side as u32;
    let img = img.resize_exact(side32, side32, ::image::imageops::FilterType::Triangle);
    let raw: Vec<u8> = match channels {
        1 => img.to_luma8().into_raw(),
        3 => img.to_rgb8().into_raw(),
        other => return Err(Error::invalid(format!("unsupported channel count {other}"))),
    };
    Array3::from_shape_vec((side, side, channels), raw.into_iter().map(|b| b as f64 / 255.0).collect())
        .map_err(|e| Error::shape(e.to_string()))
}

impl ParamTree for ImageEncoder {
    fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = vec![
            ("patch_embed".into(), &self.patch_embed),
            ("patch_bias".into(), &self.patch_bias),
            ("position".into(), &self.position),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            out.extend(prefixed(&format!("layer{i}"), l.tensors()));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let mut out = vec![
            ("patch_embed".into(), &mut self.patch_embed),
            ("patch_bias".into(), &mut self.patch_bias),
            ("position".into(), &mut self.position),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.extend(prefixed_mut(&format!("layer{i}"), l.tensors_mut()));
        }
        out
    }
}
