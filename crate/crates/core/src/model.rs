//! The assembled classifier: per-modality front ends, dual co-attention,
//! fusion and the dense softmax head, with an analytic backward pass.

use ndarray::{Array1, Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coattention::{
    co_attention_backward, co_attention_forward, fuse_backward, fuse_pooled, AblationVariant,
    Branches, ClassifierHead, CoAttentionParams, Component, FusedRepresentation, FusionInputs,
};
use crate::data::TaskId;
use crate::encoders::{
    EncoderConfig, FeatureSequence, ImageCache, ImageEncoder, Modality, TextCache, TextEncoder,
};
use crate::error::{Error, Result};
use crate::ops::{ensure_shape, init_uniform, softmax};
use crate::params::{prefixed, prefixed_mut, ParamTree};
use crate::training::loss_gradient;

/// Where token features come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Frontend {
    /// Built-in trainable encoders over pixels and token ids.
    Lightweight,
    /// Precomputed features from a pretrained adapter, aligned to the
    /// encoder widths by a trainable linear projection.
    Adapter {
        visual_input_width: usize,
        textual_input_width: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub task: TaskId,
    pub frontend: Frontend,
    pub visual: EncoderConfig,
    pub textual: EncoderConfig,
    pub d_model: usize,
    pub d_head: usize,
    pub heads: usize,
    pub variant: AblationVariant,
}

impl ModelConfig {
    /// Desk-scale defaults: 2 heads, `d_model = 64`, `d_head = 32`.
    pub fn new(task: TaskId, visual: EncoderConfig, textual: EncoderConfig) -> Self {
        ModelConfig {
            task,
            frontend: Frontend::Lightweight,
            visual,
            textual,
            d_model: 64,
            d_head: 32,
            heads: 2,
            variant: AblationVariant::Full,
        }
    }

    pub fn class_count(&self) -> usize {
        self.task.class_count()
    }

    pub fn fused_width(&self) -> usize {
        self.variant
            .fused_width(self.d_model, self.visual.output_width, self.textual.output_width)
    }

    pub fn validate(&self) -> Result<()> {
        self.visual.validate()?;
        self.textual.validate()?;
        if self.visual.modality != Modality::Visual || self.textual.modality != Modality::Textual {
            return Err(Error::invalid("encoder configs have the wrong modalities"));
        }
        if self.heads == 0 || self.d_head == 0 || self.d_model == 0 {
            return Err(Error::invalid("heads, d_head and d_model must be >= 1"));
        }
        if let Frontend::Adapter {
            visual_input_width,
            textual_input_width,
        } = self.frontend
        {
            if visual_input_width == 0 || textual_input_width == 0 {
                return Err(Error::invalid("adapter input widths must be >= 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VisualStage {
    Encoder(ImageEncoder),
    Projection(Array2<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TextualStage {
    Encoder(TextEncoder),
    Projection(Array2<f64>),
}

/// One model input, matching the model's [`Frontend`].
#[derive(Debug, Clone, PartialEq)]
pub enum ModelInput {
    Raw { image: Array3<f64>, tokens: Vec<usize> },
    Features { visual: FeatureSequence, textual: FeatureSequence },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoraModel {
    pub config: ModelConfig,
    pub visual: VisualStage,
    pub textual: TextualStage,
    pub co_attention: CoAttentionParams,
    pub head: ClassifierHead,
}

enum VisualCache {
    Encoder(ImageCache),
    Projection(Array2<f64>),
}

enum TextualCache {
    Encoder(TextCache),
    Projection(Array2<f64>),
}

/// Result of one forward + backward pass.
pub struct Gradient {
    pub loss: f64,
    pub probabilities: Array1<f64>,
    pub grads: DoraModel,
}

impl DoraModel {
    /// Seeded initialisation; every weight is uniform in `±1/√fan_in`, biases zero.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dv = config.visual.output_width;
        let dt = config.textual.output_width;
        let (visual, textual) = match config.frontend {
            Frontend::Lightweight => (
                VisualStage::Encoder(ImageEncoder::init(&mut rng, config.visual.clone())?),
                TextualStage::Encoder(TextEncoder::init(&mut rng, config.textual.clone())?),
            ),
            Frontend::Adapter {
                visual_input_width,
                textual_input_width,
            } => (
                VisualStage::Projection(init_uniform(&mut rng, visual_input_width, dv, visual_input_width)),
                TextualStage::Projection(init_uniform(&mut rng, textual_input_width, dt, textual_input_width)),
            ),
        };
        let co_attention =
            CoAttentionParams::init(&mut rng, dv, dt, config.d_head, config.heads, config.d_model)?;
        let head = ClassifierHead::init(&mut rng, config.fused_width(), config.class_count());
        Ok(DoraModel {
            config,
            visual,
            textual,
            co_attention,
            head,
        })
    }

    /// Checks that every tensor has the shape the config implies.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let expected = DoraModel::init(self.config.clone(), 0)?;
        let ours = self.tensors();
        let theirs = expected.tensors();
        if ours.len() != theirs.len() {
            return Err(Error::shape(format!(
                "model has {} tensors, config implies {}",
                ours.len(),
                theirs.len()
            )));
        }
        for ((n, a), (m, b)) in ours.iter().zip(&theirs) {
            if n != m {
                return Err(Error::shape(format!("tensor {n} where {m} was expected")));
            }
            ensure_shape(n, a, b.nrows(), b.ncols())?;
        }
        Ok(())
    }

    fn visual_forward(&self, input: &ModelInput) -> Result<(Array2<f64>, VisualCache)> {
        match (&self.visual, input) {
            (VisualStage::Encoder(enc), ModelInput::Raw { image, .. }) => {
                let (x, c) = enc.forward_cached(image)?;
                Ok((x, VisualCache::Encoder(c)))
            }
            (VisualStage::Projection(w), ModelInput::Features { visual, .. }) => {
                if visual.modality() != Modality::Visual {
                    return Err(Error::invalid("visual input has textual modality"));
                }
                ensure_shape("visual projection", w, visual.width(), w.ncols())?;
                Ok((visual.values().dot(w), VisualCache::Projection(visual.values().clone())))
            }
            _ => Err(Error::invalid("input kind does not match the model front end")),
        }
    }

    fn textual_forward(&self, input: &ModelInput) -> Result<(Array2<f64>, TextualCache)> {
        match (&self.textual, input) {
            (TextualStage::Encoder(enc), ModelInput::Raw { tokens, .. }) => {
                let (x, c) = enc.forward_cached(tokens)?;
                Ok((x, TextualCache::Encoder(c)))
            }
            (TextualStage::Projection(w), ModelInput::Features { textual, .. }) => {
                if textual.modality() != Modality::Textual {
                    return Err(Error::invalid("textual input has visual modality"));
                }
                ensure_shape("textual projection", w, textual.width(), w.ncols())?;
                Ok((textual.values().dot(w), TextualCache::Projection(textual.values().clone())))
            }
            _ => Err(Error::invalid("input kind does not match the model front end")),
        }
    }

    /// Encoder outputs for an input, before co-attention.
    pub fn encode(&self, input: &ModelInput) -> Result<(FeatureSequence, FeatureSequence)> {
        let (xv, _) = self.visual_forward(input)?;
        let (xt, _) = self.textual_forward(input)?;
        Ok((
            FeatureSequence::new(xv, Modality::Visual)?,
            FeatureSequence::new(xt, Modality::Textual)?,
        ))
    }

    pub fn fused(&self, input: &ModelInput) -> Result<FusedRepresentation> {
        Ok(self.forward(input)?.fused)
    }

    /// Class probabilities.
    pub fn predict_proba(&self, input: &ModelInput) -> Result<Array1<f64>> {
        Ok(self.forward(input)?.probabilities)
    }

    /// Most probable class; ties go to the lower index.
    pub fn predict(&self, input: &ModelInput) -> Result<usize> {
        let p = self.predict_proba(input)?;
        Ok(argmax(&p))
    }

    fn forward(&self, input: &ModelInput) -> Result<ForwardState> {
        let variant = self.config.variant;
        let (xv, vcache) = self.visual_forward(input)?;
        let (xt, tcache) = self.textual_forward(input)?;
        let branches = Branches {
            vgar: variant.includes(Component::Vgar),
            tgar: variant.includes(Component::Tgar),
        };
        let (attn, acache) = if branches.vgar || branches.tgar {
            let (o, c) = co_attention_forward(&xv, &xt, &self.co_attention, branches);
            (Some(o), Some(c))
        } else {
            (None, None)
        };
        let fused = fuse_pooled(
            &FusionInputs {
                vgar: attn.as_ref().and_then(|o| o.vgar.as_ref()),
                tgar: attn.as_ref().and_then(|o| o.tgar.as_ref()),
                visual: &xv,
                textual: &xt,
            },
            &variant.components(),
        )?;
        if fused.width() != self.head.input_width() {
            return Err(Error::shape(format!(
                "head expects width {}, fused vector has {}",
                self.head.input_width(),
                fused.width()
            )));
        }
        let probabilities = softmax(&self.head.logits(fused.values()));
        if probabilities.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("class probabilities".into()));
        }
        Ok(ForwardState {
            lengths: [xv.nrows(), xt.nrows(), xv.nrows(), xt.nrows()],
            vcache,
            tcache,
            acache,
            fused,
            probabilities,
        })
    }

    /// Cross-entropy loss of one example and its gradient w.r.t. every weight.
    /// `class_weight` scales the loss (1.0 when class reweighting is off).
    pub fn loss_and_gradient(&self, input: &ModelInput, gold: usize, class_weight: f64) -> Result<Gradient> {
        let state = self.forward(input)?;
        let (loss, dlogits) = loss_gradient(&state.probabilities, gold)?;
        let loss = loss * class_weight;
        let dlogits = dlogits * class_weight;
        let mut grads = self.zeros_like();

        let fused = state.fused.values();
        grads.head.weight += &outer(fused, &dlogits);
        grads.head.bias += &dlogits.view().insert_axis(ndarray::Axis(0));
        let dfused = self.head.weight.dot(&dlogits);

        let routed = fuse_backward(&state.fused, &dfused, state.lengths);
        let mut dxv = routed.visual.unwrap_or_else(|| Array2::zeros((state.lengths[0], self.config.visual.output_width)));
        let mut dxt = routed.textual.unwrap_or_else(|| Array2::zeros((state.lengths[1], self.config.textual.output_width)));
        if let Some(acache) = &state.acache {
            let (av, at) = co_attention_backward(
                &self.co_attention,
                acache,
                routed.vgar.as_ref(),
                routed.tgar.as_ref(),
                &mut grads.co_attention,
            );
            dxv += &av;
            dxt += &at;
        }

        if self.config.visual.trainable {
            match (&self.visual, &state.vcache, &mut grads.visual) {
                (VisualStage::Encoder(enc), VisualCache::Encoder(c), VisualStage::Encoder(g)) => {
                    enc.backward(c, &dxv, g)
                }
                (VisualStage::Projection(_), VisualCache::Projection(f), VisualStage::Projection(g)) => {
                    *g += &f.t().dot(&dxv)
                }
                _ => unreachable!("stage and cache kinds always agree"),
            }
        }
        if self.config.textual.trainable {
            match (&self.textual, &state.tcache, &mut grads.textual) {
                (TextualStage::Encoder(enc), TextualCache::Encoder(c), TextualStage::Encoder(g)) => {
                    enc.backward(c, &dxt, g)
                }
                (TextualStage::Projection(_), TextualCache::Projection(f), TextualStage::Projection(g)) => {
                    *g += &f.t().dot(&dxt)
                }
                _ => unreachable!("stage and cache kinds always agree"),
            }
        }

        Ok(Gradient {
            loss,
            probabilities: state.probabilities,
            grads,
        })
    }

    /// Loss only; used by finite-difference checks.
    pub fn loss(&self, input: &ModelInput, gold: usize) -> Result<f64> {
        let p = self.predict_proba(input)?;
        crate::training::cross_entropy_loss(&p, gold)
    }

    /// One flag per entry of [`ParamTree::tensors`]: false for frozen encoders.
    pub fn trainable_mask(&self) -> Vec<bool> {
        self.tensors()
            .iter()
            .map(|(name, _)| {
                if name.starts_with("visual.") {
                    self.config.visual.trainable
                } else if name.starts_with("textual.") {
                    self.config.textual.trainable
                } else {
                    true
                }
            })
            .collect()
    }

    /// A copy with every weight rounded to `f32`.
    pub fn rounded_to_f32(&self) -> Self {
        let mut m = self.clone();
        m.round_to_f32();
        m
    }
}

struct ForwardState {
    lengths: [usize; 4],
    vcache: VisualCache,
    tcache: TextualCache,
    acache: Option<crate::coattention::CoAttentionCache>,
    fused: FusedRepresentation,
    probabilities: Array1<f64>,
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    a.view()
        .insert_axis(ndarray::Axis(1))
        .dot(&b.view().insert_axis(ndarray::Axis(0)))
}

pub(crate) fn argmax(p: &Array1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

impl ParamTree for DoraModel {
    fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = match &self.visual {
            VisualStage::Encoder(e) => prefixed("visual", e.tensors()),
            VisualStage::Projection(w) => vec![("visual.projection".into(), w)],
        };
        out.extend(match &self.textual {
            TextualStage::Encoder(e) => prefixed("textual", e.tensors()),
            TextualStage::Projection(w) => vec![("textual.projection".into(), w)],
        });
        out.extend(prefixed("coattn", self.co_attention.tensors()));
        out.extend(prefixed("head", self.head.tensors()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let mut out = match &mut self.visual {
            VisualStage::Encoder(e) => prefixed_mut("visual", e.tensors_mut()),
            VisualStage::Projection(w) => vec![("visual.projection".into(), w)],
        };
        out.extend(match &mut self.textual {
            TextualStage::Encoder(e) => prefixed_mut("textual", e.tensors_mut()),
            TextualStage::Projection(w) => vec![("textual.projection".into(), w)],
        });
        out.extend(prefixed_mut("coattn", self.co_attention.tensors_mut()));
        out.extend(prefixed_mut("head", self.head.tensors_mut()));
        out
    }
}
