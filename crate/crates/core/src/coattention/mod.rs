//! Dual co-attention: visual queries attend over textual keys, and the
//! resulting score matrix reweights both modalities' value rows.
//!
//! For one head with visual features `Xv` (`L_v x d_v`) and textual
//! features `Xt` (`L_t x d_t`):
//!
//! ```text
//! S    = (Xv W_Q)(Xt W_K)ᵀ / √d_head                 L_v x L_t
//! A_v  = softmax of S down each column (visual axis)
//! w_v  = row means of A_v                            Σ w_v = 1
//! VGAR = diag(w_v) · Xv W_Vv
//! A_t  = softmax of S along each row (textual axis)
//! w_t  = column means of A_t                         Σ w_t = 1
//! TGAR = diag(w_t) · Xt W_Vt
//! ```
//!
//! Heads are concatenated along the feature axis and mapped to `d_model`
//! by `O_v` / `O_t`.

mod fusion;
mod head;

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::{FeatureSequence, Modality};
use crate::error::{Error, Result};
use crate::ops::{
    ensure_finite, ensure_shape, init_uniform, mean_axis_sorted, softmax_cols, softmax_cols_backward, softmax_rows,
    softmax_rows_backward,
};
use crate::params::{prefixed, prefixed_mut, ParamTree};

pub use fusion::{fuse, fuse_components, fusion_gradients, FusedRepresentation};
pub(crate) use fusion::{fuse_backward, fuse_pooled, FusionInputs};
pub use head::{classify, ClassifierHead};

/// Cross-modal similarity between visual (rows) and textual (columns) tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix(Array2<f64>);

impl ScoreMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::shape("score matrix has a zero-length axis"));
        }
        ensure_finite("score matrix", &values)?;
        Ok(ScoreMatrix(values))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn visual_len(&self) -> usize {
        self.0.nrows()
    }

    pub fn textual_len(&self) -> usize {
        self.0.ncols()
    }
}

/// Fusion components, in concatenation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Component {
    Vgar,
    Tgar,
    Vf,
    Tf,
}

impl Component {
    pub const ORDER: [Component; 4] = [Component::Vgar, Component::Tgar, Component::Vf, Component::Tf];

    pub fn name(self) -> &'static str {
        match self {
            Component::Vgar => "VGAR",
            Component::Tgar => "TGAR",
            Component::Vf => "VF",
            Component::Tf => "TF",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AblationVariant {
    #[default]
    Full,
    NoVf,
    NoTf,
    NoVfTf,
    NoVgar,
    NoTgar,
    NoVgarTgar,
}

impl AblationVariant {
    /// Row order of the ablation table: the six reduced models, then the full one.
    pub const ALL: [AblationVariant; 7] = [
        AblationVariant::NoVf,
        AblationVariant::NoTf,
        AblationVariant::NoVfTf,
        AblationVariant::NoVgar,
        AblationVariant::NoTgar,
        AblationVariant::NoVgarTgar,
        AblationVariant::Full,
    ];

    pub fn excluded(self) -> &'static [Component] {
        match self {
            AblationVariant::Full => &[],
            AblationVariant::NoVf => &[Component::Vf],
            AblationVariant::NoTf => &[Component::Tf],
            AblationVariant::NoVfTf => &[Component::Vf, Component::Tf],
            AblationVariant::NoVgar => &[Component::Vgar],
            AblationVariant::NoTgar => &[Component::Tgar],
            AblationVariant::NoVgarTgar => &[Component::Vgar, Component::Tgar],
        }
    }

    pub fn includes(self, c: Component) -> bool {
        !self.excluded().contains(&c)
    }

    pub fn components(self) -> Vec<Component> {
        Component::ORDER
            .into_iter()
            .filter(|c| self.includes(*c))
            .collect()
    }

    pub fn code(self) -> &'static str {
        match self {
            AblationVariant::Full => "FULL",
            AblationVariant::NoVf => "NO_VF",
            AblationVariant::NoTf => "NO_TF",
            AblationVariant::NoVfTf => "NO_VF_TF",
            AblationVariant::NoVgar => "NO_VGAR",
            AblationVariant::NoTgar => "NO_TGAR",
            AblationVariant::NoVgarTgar => "NO_VGAR_TGAR",
        }
    }

    /// Row label used in ablation tables.
    pub fn label(self) -> &'static str {
        match self {
            AblationVariant::Full => "DORA",
            AblationVariant::NoVf => "DORA w/o VF",
            AblationVariant::NoTf => "DORA w/o TF",
            AblationVariant::NoVfTf => "DORA w/o VF+TF",
            AblationVariant::NoVgar => "DORA w/o VGAR",
            AblationVariant::NoTgar => "DORA w/o TGAR",
            AblationVariant::NoVgarTgar => "DORA w/o VGAR + TGAR",
        }
    }

    /// Width of the fused vector for the given component widths.
    pub fn fused_width(self, d_model: usize, d_visual: usize, d_textual: usize) -> usize {
        self.components()
            .into_iter()
            .map(|c| match c {
                Component::Vgar | Component::Tgar => d_model,
                Component::Vf => d_visual,
                Component::Tf => d_textual,
            })
            .sum()
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for AblationVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        AblationVariant::ALL
            .into_iter()
            .find(|v| v.code() == norm)
            .ok_or_else(|| Error::invalid(format!("unknown ablation variant {s:?}")))
    }
}

/// Projections for one attention head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// `d_v x d_head`
    pub w_q: Array2<f64>,
    /// `d_t x d_head`
    pub w_k: Array2<f64>,
    /// `d_v x d_head`
    pub w_vv: Array2<f64>,
    /// `d_t x d_head`
    pub w_vt: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoAttentionParams {
    pub heads: Vec<HeadParams>,
    /// `(H · d_head) x d_model`
    pub o_v: Array2<f64>,
    /// `(H · d_head) x d_model`
    pub o_t: Array2<f64>,
}

impl CoAttentionParams {
    pub fn init<R: Rng + ?Sized>(
        rng: &mut R,
        d_visual: usize,
        d_textual: usize,
        d_head: usize,
        heads: usize,
        d_model: usize,
    ) -> Result<Self> {
        if heads == 0 || d_head == 0 || d_model == 0 || d_visual == 0 || d_textual == 0 {
            return Err(Error::invalid("co-attention dimensions must all be >= 1"));
        }
        let heads = (0..heads)
            .map(|_| HeadParams {
                w_q: init_uniform(rng, d_visual, d_head, d_visual),
                w_k: init_uniform(rng, d_textual, d_head, d_textual),
                w_vv: init_uniform(rng, d_visual, d_head, d_visual),
                w_vt: init_uniform(rng, d_textual, d_head, d_textual),
            })
            .collect::<Vec<_>>();
        let concat = heads.len() * d_head;
        Ok(CoAttentionParams {
            o_v: init_uniform(rng, concat, d_model, concat),
            o_t: init_uniform(rng, concat, d_model, concat),
            heads,
        })
    }

    pub fn head_count(&self) -> usize {
        self.heads.len()
    }

    pub fn d_head(&self) -> usize {
        self.heads[0].w_q.ncols()
    }

    pub fn d_model(&self) -> usize {
        self.o_v.ncols()
    }

    pub fn d_visual(&self) -> usize {
        self.heads[0].w_q.nrows()
    }

    pub fn d_textual(&self) -> usize {
        self.heads[0].w_k.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads.is_empty() {
            return Err(Error::invalid("co-attention needs at least one head"));
        }
        let (dv, dt, dh) = (self.d_visual(), self.d_textual(), self.d_head());
        if dh == 0 {
            return Err(Error::invalid("d_head must be >= 1"));
        }
        for (i, h) in self.heads.iter().enumerate() {
            ensure_shape(&format!("head {i} W_Q"), &h.w_q, dv, dh)?;
            ensure_shape(&format!("head {i} W_K"), &h.w_k, dt, dh)?;
            ensure_shape(&format!("head {i} W_Vv"), &h.w_vv, dv, dh)?;
            ensure_shape(&format!("head {i} W_Vt"), &h.w_vt, dt, dh)?;
        }
        let concat = self.heads.len() * dh;
        ensure_shape("O_v", &self.o_v, concat, self.d_model())?;
        ensure_shape("O_t", &self.o_t, concat, self.d_model())?;
        if !self.all_finite() {
            return Err(Error::NonFinite("co-attention parameters".into()));
        }
        Ok(())
    }
}

impl ParamTree for CoAttentionParams {
    fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = Vec::new();
        for (i, h) in self.heads.iter().enumerate() {
            out.extend(prefixed(
                &format!("head{i}"),
                vec![
                    ("w_q".into(), &h.w_q),
                    ("w_k".into(), &h.w_k),
                    ("w_vv".into(), &h.w_vv),
                    ("w_vt".into(), &h.w_vt),
                ],
            ));
        }
        out.push(("o_v".into(), &self.o_v));
        out.push(("o_t".into(), &self.o_t));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let mut out = Vec::new();
        for (i, h) in self.heads.iter_mut().enumerate() {
            out.extend(prefixed_mut(
                &format!("head{i}"),
                vec![
                    ("w_q".into(), &mut h.w_q),
                    ("w_k".into(), &mut h.w_k),
                    ("w_vv".into(), &mut h.w_vv),
                    ("w_vt".into(), &mut h.w_vt),
                ],
            ));
        }
        out.push(("o_v".into(), &mut self.o_v));
        out.push(("o_t".into(), &mut self.o_t));
        out
    }
}

fn raw_scores(xv: &Array2<f64>, xt: &Array2<f64>, w_q: &Array2<f64>, w_k: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let q = xv.dot(w_q);
    let k = xt.dot(w_k);
    let scale = 1.0 / (w_q.ncols() as f64).sqrt();
    let s = q.dot(&k.t()) * scale;
    (q, k, s)
}

/// `S = (Xv W_Q)(Xt W_K)ᵀ / √d_head`.
pub fn cross_attention_scores(
    q_features: &FeatureSequence,
    k_features: &FeatureSequence,
    w_q: &Array2<f64>,
    w_k: &Array2<f64>,
) -> Result<ScoreMatrix> {
    if q_features.modality() != Modality::Visual || k_features.modality() != Modality::Textual {
        return Err(Error::invalid(
            "queries must be visual and keys textual",
        ));
    }
    if w_q.ncols() != w_k.ncols() || w_q.ncols() == 0 {
        return Err(Error::shape(format!(
            "W_Q and W_K project to different head widths ({} vs {})",
            w_q.ncols(),
            w_k.ncols()
        )));
    }
    ensure_shape("W_Q", w_q, q_features.width(), w_q.ncols())?;
    ensure_shape("W_K", w_k, k_features.width(), w_k.ncols())?;
    let (_, _, s) = raw_scores(q_features.values(), k_features.values(), w_q, w_k);
    ScoreMatrix::new(s)
}

/// Softmax down the visual axis and the per-visual-token weight `w_v`.
pub fn visual_axis_weights(scores: &ScoreMatrix) -> (Array2<f64>, Array1<f64>) {
    let a = softmax_cols(scores.values().view());
    let w = mean_axis_sorted(&a, Axis(1));
    (a, w)
}

/// Softmax along the textual axis and the per-textual-token weight `w_t`.
pub fn textual_axis_weights(scores: &ScoreMatrix) -> (Array2<f64>, Array1<f64>) {
    let a = softmax_rows(scores.values().view());
    let w = mean_axis_sorted(&a, Axis(0));
    (a, w)
}

fn scale_rows(weights: &Array1<f64>, values: &Array2<f64>) -> Array2<f64> {
    values * &weights.view().insert_axis(Axis(1))
}

/// Vision-guided attentive representation: visual value rows scaled by `w_v`.
pub fn vision_guided_repr(scores: &ScoreMatrix, v_visual: &Array2<f64>) -> Result<Array2<f64>> {
    if v_visual.nrows() != scores.visual_len() || v_visual.ncols() == 0 {
        return Err(Error::shape(format!(
            "visual values have {} rows, scores have {} visual tokens",
            v_visual.nrows(),
            scores.visual_len()
        )));
    }
    let (_, w) = visual_axis_weights(scores);
    Ok(scale_rows(&w, v_visual))
}

/// Text-guided attentive representation: textual value rows scaled by `w_t`.
pub fn text_guided_repr(scores: &ScoreMatrix, v_textual: &Array2<f64>) -> Result<Array2<f64>> {
    if v_textual.nrows() != scores.textual_len() || v_textual.ncols() == 0 {
        return Err(Error::shape(format!(
            "textual values have {} rows, scores have {} textual tokens",
            v_textual.nrows(),
            scores.textual_len()
        )));
    }
    let (_, w) = textual_axis_weights(scores);
    Ok(scale_rows(&w, v_textual))
}

struct HeadCache {
    q: Array2<f64>,
    k: Array2<f64>,
    a_v: Array2<f64>,
    w_v: Array1<f64>,
    val_v: Array2<f64>,
    a_t: Array2<f64>,
    w_t: Array1<f64>,
    val_t: Array2<f64>,
}

pub(crate) struct CoAttentionCache {
    xv: Array2<f64>,
    xt: Array2<f64>,
    heads: Vec<HeadCache>,
    concat_v: Option<Array2<f64>>,
    concat_t: Option<Array2<f64>>,
}

/// Which outputs the caller needs; a branch that is not needed is skipped.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Branches {
    pub vgar: bool,
    pub tgar: bool,
}

pub(crate) struct CoAttentionOutput {
    pub vgar: Option<Array2<f64>>,
    pub tgar: Option<Array2<f64>>,
}

pub(crate) fn co_attention_forward(
    xv: &Array2<f64>,
    xt: &Array2<f64>,
    params: &CoAttentionParams,
    branches: Branches,
) -> (CoAttentionOutput, CoAttentionCache) {
    let h = params.heads.len();
    let dh = params.d_head();
    let mut concat_v = branches.vgar.then(|| Array2::zeros((xv.nrows(), h * dh)));
    let mut concat_t = branches.tgar.then(|| Array2::zeros((xt.nrows(), h * dh)));
    let mut heads = Vec::with_capacity(h);

    for (i, hp) in params.heads.iter().enumerate() {
        let (q, k, s) = raw_scores(xv, xt, &hp.w_q, &hp.w_k);
        let a_v = softmax_cols(s.view());
        let w_v = mean_axis_sorted(&a_v, Axis(1));
        let a_t = softmax_rows(s.view());
        let w_t = mean_axis_sorted(&a_t, Axis(0));
        let val_v = xv.dot(&hp.w_vv);
        let val_t = xt.dot(&hp.w_vt);
        if let Some(cv) = concat_v.as_mut() {
            cv.slice_mut(s![.., i * dh..(i + 1) * dh])
                .assign(&scale_rows(&w_v, &val_v));
        }
        if let Some(ct) = concat_t.as_mut() {
            ct.slice_mut(s![.., i * dh..(i + 1) * dh])
                .assign(&scale_rows(&w_t, &val_t));
        }
        heads.push(HeadCache {
            q,
            k,
            a_v,
            w_v,
            val_v,
            a_t,
            w_t,
            val_t,
        });
    }

    let out = CoAttentionOutput {
        vgar: concat_v.as_ref().map(|c| c.dot(&params.o_v)),
        tgar: concat_t.as_ref().map(|c| c.dot(&params.o_t)),
    };
    let cache = CoAttentionCache {
        xv: xv.clone(),
        xt: xt.clone(),
        heads,
        concat_v,
        concat_t,
    };
    (out, cache)
}

/// Accumulates parameter gradients and returns `(dXv, dXt)`.
pub(crate) fn co_attention_backward(
    params: &CoAttentionParams,
    cache: &CoAttentionCache,
    dvgar: Option<&Array2<f64>>,
    dtgar: Option<&Array2<f64>>,
    grads: &mut CoAttentionParams,
) -> (Array2<f64>, Array2<f64>) {
    let (lv, lt) = (cache.xv.nrows(), cache.xt.nrows());
    let dh = params.d_head();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dxv = Array2::zeros(cache.xv.raw_dim());
    let mut dxt = Array2::zeros(cache.xt.raw_dim());

    let dconcat_v = match (dvgar, &cache.concat_v) {
        (Some(d), Some(c)) => {
            grads.o_v += &c.t().dot(d);
            Some(d.dot(&params.o_v.t()))
        }
        _ => None,
    };
    let dconcat_t = match (dtgar, &cache.concat_t) {
        (Some(d), Some(c)) => {
            grads.o_t += &c.t().dot(d);
            Some(d.dot(&params.o_t.t()))
        }
        _ => None,
    };

    for (i, (hp, hc)) in params.heads.iter().zip(&cache.heads).enumerate() {
        let hg = &mut grads.heads[i];
        let mut dscores = Array2::<f64>::zeros((lv, lt));

        if let Some(dc) = &dconcat_v {
            let dg = dc.slice(s![.., i * dh..(i + 1) * dh]);
            // d w_v[i] = <dG[i,:], V[i,:]>; each A_v[i, j] contributes w_v[i] / L_t.
            let dw = (&dg * &hc.val_v).sum_axis(Axis(1));
            let dval = scale_rows(&hc.w_v, &dg.to_owned());
            hg.w_vv += &cache.xv.t().dot(&dval);
            dxv += &dval.dot(&hp.w_vv.t());
            let da = Array2::from_shape_fn((lv, lt), |(r, _)| dw[r] / lt as f64);
            dscores += &softmax_cols_backward(&hc.a_v, &da);
        }
        if let Some(dc) = &dconcat_t {
            let dg = dc.slice(s![.., i * dh..(i + 1) * dh]);
            let dw = (&dg * &hc.val_t).sum_axis(Axis(1));
            let dval = scale_rows(&hc.w_t, &dg.to_owned());
            hg.w_vt += &cache.xt.t().dot(&dval);
            dxt += &dval.dot(&hp.w_vt.t());
            let da = Array2::from_shape_fn((lv, lt), |(_, c)| dw[c] / lv as f64);
            dscores += &softmax_rows_backward(&hc.a_t, &da);
        }

        if dconcat_v.is_some() || dconcat_t.is_some() {
            dscores *= scale;
            let dq = dscores.dot(&hc.k);
            let dk = dscores.t().dot(&hc.q);
            hg.w_q += &cache.xv.t().dot(&dq);
            hg.w_k += &cache.xt.t().dot(&dk);
            dxv += &dq.dot(&hp.w_q.t());
            dxt += &dk.dot(&hp.w_k.t());
        }
    }
    (dxv, dxt)
}

/// Runs every head and returns `(VGAR, TGAR)` sequences of width `d_model`.
pub fn multi_head_co_attention(
    visual: &FeatureSequence,
    textual: &FeatureSequence,
    params: &CoAttentionParams,
) -> Result<(Array2<f64>, Array2<f64>)> {
    params.validate()?;
    if visual.modality() != Modality::Visual || textual.modality() != Modality::Textual {
        return Err(Error::invalid("expected a visual and a textual feature sequence"));
    }
    if visual.width() != params.d_visual() || textual.width() != params.d_textual() {
        return Err(Error::shape(format!(
            "feature widths ({}, {}) do not match co-attention inputs ({}, {})",
            visual.width(),
            textual.width(),
            params.d_visual(),
            params.d_textual()
        )));
    }
    let (out, _) = co_attention_forward(
        visual.values(),
        textual.values(),
        params,
        Branches {
            vgar: true,
            tgar: true,
        },
    );
    let vgar = out.vgar.expect("requested");
    let tgar = out.tgar.expect("requested");
    ensure_finite("VGAR", &vgar)?;
    ensure_finite("TGAR", &tgar)?;
    Ok((vgar, tgar))
}

/// Per-head VGAR/TGAR before the output projections, concatenated along
/// the feature axis.
pub fn head_concatenation(
    visual: &FeatureSequence,
    textual: &FeatureSequence,
    params: &CoAttentionParams,
) -> Result<(Array2<f64>, Array2<f64>)> {
    params.validate()?;
    let (_, cache) = co_attention_forward(
        visual.values(),
        textual.values(),
        params,
        Branches {
            vgar: true,
            tgar: true,
        },
    );
    Ok((cache.concat_v.expect("requested"), cache.concat_t.expect("requested")))
}
