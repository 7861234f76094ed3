//! Loss, optimizers, the epoch loop and gradient verification.

mod gradcheck;
mod loss;
mod optim;
mod trainer;

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gradcheck::{gradient_check, relative_error, GradCheckReport};
pub use loss::{cross_entropy_loss, PROB_FLOOR};
pub(crate) use loss::loss_gradient;
pub use optim::{optimizer_step, OptimizerKind, OptimizerState, StepConfig};
pub use trainer::{evaluate, train, EpochRecord, Evaluation, TrainHistory, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheduler {
    None,
    /// Halve the learning rate after `PLATEAU_PATIENCE` epochs without a
    /// validation F1 improvement.
    ReduceOnPlateau,
}

pub const PLATEAU_PATIENCE: usize = 3;

impl FromStr for Scheduler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Scheduler::None),
            "reduce_on_plateau" => Ok(Scheduler::ReduceOnPlateau),
            other => Err(Error::invalid(format!("unknown scheduler {other:?}"))),
        }
    }
}

impl Scheduler {
    fn as_str(self) -> &'static str {
        match self {
            Scheduler::None => "none",
            Scheduler::ReduceOnPlateau => "reduce_on_plateau",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub scheduler: Scheduler,
    pub seed: u64,
    /// Scale each example's loss by inverse class frequency in the train split.
    pub class_weighting: bool,
    /// Stop once an epoch's running train accuracy reaches this value.
    pub stop_at_train_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Madgrad,
            learning_rate: 2e-5,
            weight_decay: 0.01,
            batch_size: 4,
            epochs: 20,
            scheduler: Scheduler::ReduceOnPlateau,
            seed: 0,
            class_weighting: false,
            stop_at_train_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 9] = [
        "optimizer",
        "learning_rate",
        "weight_decay",
        "batch_size",
        "epochs",
        "scheduler",
        "seed",
        "class_weighting",
        "stop_at_train_accuracy",
    ];

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning_rate must be a finite number >= 0"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::invalid("weight_decay must be >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        Ok(())
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |e: &dyn std::fmt::Display| Error::invalid(format!("{key} = {value:?}: {e}"));
        match key {
            "optimizer" => self.optimizer = value.parse()?,
            "learning_rate" | "lr" => self.learning_rate = value.parse().map_err(|e| bad(&e))?,
            "weight_decay" => self.weight_decay = value.parse().map_err(|e| bad(&e))?,
            "batch_size" => self.batch_size = value.parse().map_err(|e| bad(&e))?,
            "epochs" => self.epochs = value.parse().map_err(|e| bad(&e))?,
            "scheduler" => self.scheduler = value.parse()?,
            "seed" => self.seed = value.parse().map_err(|e| bad(&e))?,
            "class_weighting" => self.class_weighting = value.parse().map_err(|e| bad(&e))?,
            "stop_at_train_accuracy" => {
                self.stop_at_train_accuracy = match value {
                    "none" | "" => None,
                    v => Some(v.parse().map_err(|e| bad(&e))?),
                }
            }
            other => return Err(Error::invalid(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Flat `key = value` text; one key per line, `#` starts a comment.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "optimizer = {}", self.optimizer);
        let _ = writeln!(s, "learning_rate = {:?}", self.learning_rate);
        let _ = writeln!(s, "weight_decay = {:?}", self.weight_decay);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "scheduler = {}", self.scheduler.as_str());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "class_weighting = {}", self.class_weighting);
        let _ = writeln!(
            s,
            "stop_at_train_accuracy = {}",
            self.stop_at_train_accuracy
                .map_or("none".to_string(), |v| format!("{v:?}"))
        );
        s
    }
}

/// Parses flat `key = value` text into ordered pairs.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("line {}: expected key = value", i + 1)))?;
        out.push((k.trim().to_owned(), v.trim().to_owned()));
    }
    Ok(out)
}

pub fn read_kv_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_kv(&text)
}
