use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{optimizer_step, OptimizerState, Scheduler, StepConfig, TrainConfig, PLATEAU_PATIENCE};
use crate::checkpoint::{save_checkpoint, CheckpointMeta};
use crate::data::Split;
use crate::dataset::Example;
use crate::error::{Error, Result};
use crate::eval::{compute_report, EvalReport};
use crate::model::DoraModel;
use crate::params::ParamTree;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    /// Accuracy of the predictions made during the epoch, before each step.
    pub train_accuracy: f64,
    pub valid_loss: f64,
    pub valid_weighted_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch number (1-based) with the highest validation weighted F1,
    /// earliest on ties.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch - 1]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights of the best validation epoch, at checkpoint (`f32`) precision.
    pub best: DoraModel,
    /// Weights after the final epoch.
    pub last: DoraModel,
    pub history: TrainHistory,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvalReport,
    pub mean_loss: f64,
    pub predictions: Vec<usize>,
}

/// Predicts every example and scores the predictions.
pub fn evaluate(model: &DoraModel, examples: &[Example]) -> Result<Evaluation> {
    if examples.is_empty() {
        return Err(Error::invalid("nothing to evaluate"));
    }
    let scored: Vec<(usize, f64)> = examples
        .par_iter()
        .map(|ex| {
            let p = model.predict_proba(&ex.input)?;
            let loss = super::cross_entropy_loss(&p, ex.label)?;
            Ok((crate::model::argmax(&p), loss))
        })
        .collect::<Result<_>>()?;
    let predictions: Vec<usize> = scored.iter().map(|(p, _)| *p).collect();
    let golds: Vec<usize> = examples.iter().map(|e| e.label).collect();
    let mean_loss = scored.iter().map(|(_, l)| l).sum::<f64>() / scored.len() as f64;
    Ok(Evaluation {
        report: compute_report(&predictions, &golds, model.config.class_count())?,
        mean_loss,
        predictions,
    })
}

fn check_split(examples: &[Example], expected: Split) -> Result<()> {
    for ex in examples {
        if ex.split != expected {
            return Err(Error::SplitLeak {
                id: ex.id.clone(),
                split: ex.split.to_string(),
            });
        }
    }
    Ok(())
}

fn class_weights(train: &[Example], classes: usize, enabled: bool) -> Vec<f64> {
    if !enabled {
        return vec![1.0; classes];
    }
    let mut counts = vec![0usize; classes];
    for ex in train {
        counts[ex.label] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count() as f64;
    counts
        .iter()
        .map(|&c| {
            if c == 0 {
                0.0
            } else {
                train.len() as f64 / (present * c as f64)
            }
        })
        .collect()
}

/// Trains `model` on `train`, selecting the epoch with the best validation
/// weighted F1. When `checkpoint` is given, each new best is written there.
///
/// Validation is scored on the `f32`-rounded weights, so a reloaded
/// checkpoint reproduces the recorded score.
pub fn train(
    model: DoraModel,
    train: &[Example],
    valid: &[Example],
    config: &TrainConfig,
    checkpoint: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptySplit("train".into()));
    }
    if valid.is_empty() {
        return Err(Error::EmptySplit("valid".into()));
    }
    check_split(train, Split::Train)?;
    check_split(valid, Split::Valid)?;
    let classes = model.config.class_count();
    if let Some(ex) = train.iter().chain(valid).find(|e| e.label >= classes) {
        return Err(Error::invalid(format!(
            "example {} has label {} but the model has {classes} classes",
            ex.id, ex.label
        )));
    }

    let weights = class_weights(train, classes, config.class_weighting);
    let mask = model.trainable_mask();
    let mut model = model;
    let mut state = OptimizerState::new(config.optimizer);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut lr = config.learning_rate;
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut records = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, DoraModel)> = None;
    let mut stale = 0usize;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;

        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let ctx = |message: String| Error::Training {
                epoch,
                batch: b + 1,
                message,
            };
            // Provenance is re-checked on every batch.
            for &i in batch {
                if train[i].split != Split::Train {
                    return Err(Error::SplitLeak {
                        id: train[i].id.clone(),
                        split: train[i].split.to_string(),
                    });
                }
            }
            let results: Vec<_> = batch
                .par_iter()
                .map(|&i| {
                    let ex = &train[i];
                    model.loss_and_gradient(&ex.input, ex.label, weights[ex.label])
                })
                .collect::<Result<_>>()
                .map_err(|e| ctx(e.to_string()))?;

            let mut grads = model.zeros_like();
            for (r, &i) in results.iter().zip(batch) {
                if !r.loss.is_finite() {
                    return Err(ctx(format!("non-finite loss on example {}", train[i].id)));
                }
                loss_sum += r.loss;
                if crate::model::argmax(&r.probabilities) == train[i].label {
                    correct += 1;
                }
                grads.accumulate(&r.grads);
            }
            grads.scale(1.0 / batch.len() as f64);
            optimizer_step(
                &mut model,
                &grads,
                &mut state,
                StepConfig {
                    learning_rate: lr,
                    weight_decay: config.weight_decay,
                },
                Some(&mask),
            )
            .map_err(|e| ctx(e.to_string()))?;
            if !model.all_finite() {
                return Err(ctx("parameters became non-finite".into()));
            }
        }

        let snapshot = model.rounded_to_f32();
        let val = evaluate(&snapshot, valid).map_err(|e| Error::Training {
            epoch,
            batch: 0,
            message: format!("validation: {e}"),
        })?;
        let f1 = val.report.weighted_f1;
        let train_accuracy = correct as f64 / train.len() as f64;
        records.push(EpochRecord {
            epoch,
            learning_rate: lr,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy,
            valid_loss: val.mean_loss,
            valid_weighted_f1: f1,
        });
        log::debug!("epoch {epoch}: train loss {:.5}, valid wF1 {f1:.4}", records.last().unwrap().train_loss);

        if best.as_ref().is_none_or(|(_, b, _)| f1 > *b) {
            if let Some(path) = checkpoint {
                save_checkpoint(
                    &snapshot,
                    path,
                    &CheckpointMeta {
                        epoch: Some(epoch),
                        valid_weighted_f1: Some(f1),
                    },
                )?;
            }
            best = Some((epoch, f1, snapshot));
            stale = 0;
        } else {
            stale += 1;
            if config.scheduler == Scheduler::ReduceOnPlateau && stale >= PLATEAU_PATIENCE {
                lr *= 0.5;
                stale = 0;
            }
        }

        if config
            .stop_at_train_accuracy
            .is_some_and(|target| train_accuracy >= target)
        {
            break;
        }
    }

    let (best_epoch, _, best_model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        best: best_model,
        last: model,
        history: TrainHistory {
            epochs: records,
            best_epoch,
        },
    })
}
