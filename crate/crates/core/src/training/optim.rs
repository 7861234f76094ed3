//! MADGRAD and Adam with decoupled weight decay.
//!
//! MADGRAD follows Defazio & Jelassi, "Adaptivity without Compromise: A
//! Momentumized, Adaptive, Dual Averaged Gradient Method for Stochastic
//! Optimization" (2021). Adam follows Kingma & Ba (2014), with decay
//! applied as in AdamW.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OptimizerKind {
    Madgrad,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "madgrad" => Ok(OptimizerKind::Madgrad),
            "adam" | "adamw" => Ok(OptimizerKind::Adam),
            other => Err(Error::invalid(format!("unknown optimizer {other:?}"))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Madgrad => "MADGRAD",
            OptimizerKind::Adam => "ADAM",
        })
    }
}

pub const MADGRAD_MOMENTUM: f64 = 0.9;
pub const MADGRAD_EPS: f64 = 1e-6;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
struct MadgradSlot {
    x0: Array2<f64>,
    grad_sum: Array2<f64>,
    grad_sum_sq: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct AdamSlot {
    m: Array2<f64>,
    v: Array2<f64>,
}

/// Per-tensor optimizer memory. Created empty and filled on the first step.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    kind: OptimizerKind,
    step: u64,
    madgrad: Vec<MadgradSlot>,
    adam: Vec<AdamSlot>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind) -> Self {
        OptimizerState {
            kind,
            step: 0,
            madgrad: Vec::new(),
            adam: Vec::new(),
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
}

/// Applies one update in place. Tensors whose `mask` entry is false are left
/// untouched. Non-finite gradients abort the step before anything changes.
pub fn optimizer_step<P: ParamTree>(
    params: &mut P,
    grads: &P,
    state: &mut OptimizerState,
    step: StepConfig,
    mask: Option<&[bool]>,
) -> Result<()> {
    let grads = grads.tensors();
    let mut tensors = params.tensors_mut();
    if grads.len() != tensors.len() {
        return Err(Error::shape(format!(
            "{} gradient tensors for {} parameters",
            grads.len(),
            tensors.len()
        )));
    }
    for ((name, p), (_, g)) in tensors.iter().zip(&grads) {
        if p.dim() != g.dim() {
            return Err(Error::shape(format!("gradient for {name} has the wrong shape")));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
    }
    if !(step.learning_rate >= 0.0) || !(step.weight_decay >= 0.0) {
        return Err(Error::invalid("learning rate and weight decay must be >= 0"));
    }

    let k = state.step;
    match state.kind {
        OptimizerKind::Madgrad => {
            if state.madgrad.is_empty() {
                state.madgrad = tensors
                    .iter()
                    .map(|(_, p)| MadgradSlot {
                        x0: (*p).clone(),
                        grad_sum: Array2::zeros(p.raw_dim()),
                        grad_sum_sq: Array2::zeros(p.raw_dim()),
                    })
                    .collect();
            }
            let lamb = step.learning_rate * ((k + 1) as f64).sqrt();
            let ck = 1.0 - MADGRAD_MOMENTUM;
            for (i, ((_, p), (_, g))) in tensors.iter_mut().zip(&grads).enumerate() {
                if mask.is_some_and(|m| !m[i]) {
                    continue;
                }
                let slot = &mut state.madgrad[i];
                if step.weight_decay != 0.0 {
                    let decay = step.learning_rate * step.weight_decay;
                    p.mapv_inplace(|v| v - decay * v);
                }
                slot.grad_sum_sq.zip_mut_with(g, |acc, &gv| *acc += lamb * gv * gv);
                slot.grad_sum.zip_mut_with(g, |acc, &gv| *acc += lamb * gv);
                ndarray::Zip::from(&mut **p)
                    .and(&slot.x0)
                    .and(&slot.grad_sum)
                    .and(&slot.grad_sum_sq)
                    .for_each(|p, &x0, &s, &v| {
                        let z = x0 - s / (v.cbrt() + MADGRAD_EPS);
                        *p = (1.0 - ck) * *p + ck * z;
                    });
            }
        }
        OptimizerKind::Adam => {
            if state.adam.is_empty() {
                state.adam = tensors
                    .iter()
                    .map(|(_, p)| AdamSlot {
                        m: Array2::zeros(p.raw_dim()),
                        v: Array2::zeros(p.raw_dim()),
                    })
                    .collect();
            }
            let t = (k + 1) as i32;
            let bc1 = 1.0 - ADAM_BETA1.powi(t);
            let bc2 = 1.0 - ADAM_BETA2.powi(t);
            for (i, ((_, p), (_, g))) in tensors.iter_mut().zip(&grads).enumerate() {
                if mask.is_some_and(|m| !m[i]) {
                    continue;
                }
                let slot = &mut state.adam[i];
                slot.m.zip_mut_with(g, |m, &gv| *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * gv);
                slot.v.zip_mut_with(g, |v, &gv| *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * gv * gv);
                let lr = step.learning_rate;
                let decay = lr * step.weight_decay;
                ndarray::Zip::from(&mut **p)
                    .and(&slot.m)
                    .and(&slot.v)
                    .for_each(|p, &m, &v| {
                        let update = (m / bc1) / ((v / bc2).sqrt() + ADAM_EPS);
                        *p = *p - decay * *p - lr * update;
                    });
            }
        }
    }
    state.step += 1;
    Ok(())
}
