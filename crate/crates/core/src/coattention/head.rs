use ndarray::{Array1, Array2};
use rand::Rng;

use super::FusedRepresentation;
use crate::error::{Error, Result};
use crate::ops::{init_uniform, softmax};
use crate::params::ParamTree;

/// Dense layer + softmax over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    /// `fused_width x classes`
    pub weight: Array2<f64>,
    /// `1 x classes`
    pub bias: Array2<f64>,
}

impl ClassifierHead {
    pub fn init<R: Rng + ?Sized>(rng: &mut R, input_width: usize, classes: usize) -> Self {
        ClassifierHead {
            weight: init_uniform(rng, input_width, classes, input_width),
            bias: Array2::zeros((1, classes)),
        }
    }

    pub fn input_width(&self) -> usize {
        self.weight.nrows()
    }

    pub fn classes(&self) -> usize {
        self.weight.ncols()
    }

    pub fn logits(&self, x: &Array1<f64>) -> Array1<f64> {
        x.dot(&self.weight) + &self.bias.row(0)
    }
}

impl ParamTree for ClassifierHead {
    fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        vec![
            ("weight".into(), &mut self.weight),
            ("bias".into(), &mut self.bias),
        ]
    }
}

/// Class probabilities for a fused representation.
pub fn classify(
    fused: &FusedRepresentation,
    head: &ClassifierHead,
    class_count: usize,
) -> Result<Array1<f64>> {
    if head.input_width() != fused.width() {
        return Err(Error::shape(format!(
            "head expects width {}, fused vector has {}",
            head.input_width(),
            fused.width()
        )));
    }
    if head.classes() != class_count || head.bias.dim() != (1, class_count) {
        return Err(Error::shape(format!(
            "head has {} outputs, {class_count} classes requested",
            head.classes()
        )));
    }
    let p = softmax(&head.logits(fused.values()));
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("class probabilities".into()));
    }
    Ok(p)
}
