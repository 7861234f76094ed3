use ndarray::{s, Array1, Array2, Axis};

use super::{AblationVariant, Component};
use crate::encoders::FeatureSequence;
use crate::error::{Error, Result};
use crate::ops::{ensure_finite, mean_axis_sorted};

/// Concatenated, mean-pooled components feeding the classifier head.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedRepresentation {
    values: Array1<f64>,
    /// Included components and their widths, in concatenation order.
    provenance: Vec<(Component, usize)>,
}

impl FusedRepresentation {
    pub fn values(&self) -> &Array1<f64> {
        &self.values
    }

    pub fn width(&self) -> usize {
        self.values.len()
    }

    pub fn provenance(&self) -> &[(Component, usize)] {
        &self.provenance
    }

    pub fn includes(&self, c: Component) -> bool {
        self.provenance.iter().any(|(x, _)| *x == c)
    }
}

pub(crate) struct FusionInputs<'a> {
    pub vgar: Option<&'a Array2<f64>>,
    pub tgar: Option<&'a Array2<f64>>,
    pub visual: &'a Array2<f64>,
    pub textual: &'a Array2<f64>,
}

impl FusionInputs<'_> {
    fn get(&self, c: Component) -> Option<&Array2<f64>> {
        match c {
            Component::Vgar => self.vgar,
            Component::Tgar => self.tgar,
            Component::Vf => Some(self.visual),
            Component::Tf => Some(self.textual),
        }
    }
}

pub(crate) fn fuse_pooled(
    inputs: &FusionInputs<'_>,
    components: &[Component],
) -> Result<FusedRepresentation> {
    if components.is_empty() {
        return Err(Error::invalid("fusion needs at least one component"));
    }
    let mut parts = Vec::with_capacity(components.len());
    let mut provenance = Vec::with_capacity(components.len());
    for c in Component::ORDER.into_iter().filter(|c| components.contains(c)) {
        let seq = inputs
            .get(c)
            .ok_or_else(|| Error::invalid(format!("{} was not computed", c.name())))?;
        if seq.nrows() == 0 {
            return Err(Error::shape(format!("{} sequence is empty", c.name())));
        }
        ensure_finite(c.name(), seq)?;
        provenance.push((c, seq.ncols()));
        parts.push(mean_axis_sorted(seq, Axis(0)));
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    let values = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::shape(e.to_string()))?;
    Ok(FusedRepresentation { values, provenance })
}

/// Gradient of the fused vector routed back to each sequence. Excluded
/// components get `None`.
pub(crate) struct FusionGrads {
    pub vgar: Option<Array2<f64>>,
    pub tgar: Option<Array2<f64>>,
    pub visual: Option<Array2<f64>>,
    pub textual: Option<Array2<f64>>,
}

pub(crate) fn fuse_backward(
    fused: &FusedRepresentation,
    dfused: &Array1<f64>,
    lengths: [usize; 4],
) -> FusionGrads {
    let mut grads = FusionGrads {
        vgar: None,
        tgar: None,
        visual: None,
        textual: None,
    };
    let mut offset = 0;
    for &(c, width) in fused.provenance() {
        let slot = Component::ORDER.iter().position(|x| *x == c).unwrap();
        let len = lengths[slot];
        let piece = dfused.slice(s![offset..offset + width]).to_owned() / len as f64;
        let g = piece
            .insert_axis(Axis(0))
            .broadcast((len, width))
            .expect("broadcast row")
            .to_owned();
        match c {
            Component::Vgar => grads.vgar = Some(g),
            Component::Tgar => grads.tgar = Some(g),
            Component::Vf => grads.visual = Some(g),
            Component::Tf => grads.textual = Some(g),
        }
        offset += width;
    }
    grads
}

/// Mean-pools the components the variant keeps and concatenates them as
/// `[VGAR, TGAR, VF, TF]`.
pub fn fuse(
    vgar: &Array2<f64>,
    tgar: &Array2<f64>,
    visual: &FeatureSequence,
    textual: &FeatureSequence,
    variant: AblationVariant,
) -> Result<FusedRepresentation> {
    fuse_components(vgar, tgar, visual, textual, &variant.components())
}

/// [`fuse`] over an explicit component list.
pub fn fuse_components(
    vgar: &Array2<f64>,
    tgar: &Array2<f64>,
    visual: &FeatureSequence,
    textual: &FeatureSequence,
    components: &[Component],
) -> Result<FusedRepresentation> {
    fuse_pooled(
        &FusionInputs {
            vgar: Some(vgar),
            tgar: Some(tgar),
            visual: visual.values(),
            textual: textual.values(),
        },
        components,
    )
}

/// Gradient of `dot(dfused, fuse(..))` with respect to each component
/// sequence, in [`Component::ORDER`]. Components the variant excludes get
/// an all-zero matrix.
pub fn fusion_gradients(
    vgar: &Array2<f64>,
    tgar: &Array2<f64>,
    visual: &FeatureSequence,
    textual: &FeatureSequence,
    variant: AblationVariant,
    dfused: &Array1<f64>,
) -> Result<[Array2<f64>; 4]> {
    let fused = fuse(vgar, tgar, visual, textual, variant)?;
    if dfused.len() != fused.width() {
        return Err(Error::shape(format!(
            "upstream gradient has width {}, fused vector {}",
            dfused.len(),
            fused.width()
        )));
    }
    let g = fuse_backward(
        &fused,
        dfused,
        [vgar.nrows(), tgar.nrows(), visual.len(), textual.len()],
    );
    let or_zero = |g: Option<Array2<f64>>, like: &Array2<f64>| g.unwrap_or_else(|| Array2::zeros(like.raw_dim()));
    Ok([
        or_zero(g.vgar, vgar),
        or_zero(g.tgar, tgar),
        or_zero(g.visual, visual.values()),
        or_zero(g.textual, textual.values()),
    ])
}
