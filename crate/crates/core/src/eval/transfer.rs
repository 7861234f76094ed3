use rayon::prelude::*;
use serde::Serialize;

use super::{fmt3, EvalReport, TextTable};
use crate::data::{DatasetManifest, Split, TaskId};
use crate::dataset::{examples_for_split, Featurizer};
use crate::error::{Error, Result};
use crate::model::DoraModel;
use crate::training::evaluate;

/// A trained model and the featurizer matching its input pipeline.
pub struct TransferSource<'a> {
    pub name: String,
    pub model: DoraModel,
    pub featurizer: &'a dyn Featurizer,
}

pub struct TransferTarget {
    pub name: String,
    pub manifest: DatasetManifest,
    pub split: Split,
    /// Label schemas the dataset provides.
    pub tasks: Vec<TaskId>,
}

impl TransferTarget {
    /// Task 1 is always available; task 2 only when some sample carries a
    /// target label.
    pub fn new(name: impl Into<String>, manifest: DatasetManifest, split: Split) -> Self {
        let mut tasks = vec![TaskId::Detection];
        if manifest.samples().iter().any(|s| s.labels.task2().is_some()) {
            tasks.push(TaskId::Target);
        }
        TransferTarget {
            name: name.into(),
            manifest,
            split,
            tasks,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellOutcome {
    Scored { weighted_f1: f64, report: EvalReport },
    Incompatible { reason: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct TransferCell {
    pub train_dataset: String,
    pub test_dataset: String,
    pub outcome: CellOutcome,
}

impl TransferCell {
    pub fn weighted_f1(&self) -> Option<f64> {
        match &self.outcome {
            CellOutcome::Scored { weighted_f1, .. } => Some(*weighted_f1),
            CellOutcome::Incompatible { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TransferMatrix {
    pub train_datasets: Vec<String>,
    pub test_datasets: Vec<String>,
    /// Row-major: `cells[i * test_datasets.len() + j]`.
    pub cells: Vec<TransferCell>,
}

/// Scores every source model on every target's split.
pub fn transfer_eval(sources: &[TransferSource<'_>], targets: &[TransferTarget]) -> Result<TransferMatrix> {
    if sources.is_empty() || targets.is_empty() {
        return Err(Error::invalid("transfer needs at least one checkpoint and one test set"));
    }
    let pairs: Vec<(usize, usize)> = (0..sources.len())
        .flat_map(|i| (0..targets.len()).map(move |j| (i, j)))
        .collect();
    let cells = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (s, t) = (&sources[i], &targets[j]);
            Ok(TransferCell {
                train_dataset: s.name.clone(),
                test_dataset: t.name.clone(),
                outcome: score(s, t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TransferMatrix {
        train_datasets: sources.iter().map(|s| s.name.clone()).collect(),
        test_datasets: targets.iter().map(|t| t.name.clone()).collect(),
        cells,
    })
}

fn score(source: &TransferSource<'_>, target: &TransferTarget) -> Result<CellOutcome> {
    let task = source.model.config.task;
    let incompatible = |reason: String| Ok(CellOutcome::Incompatible { reason });
    if !target.tasks.contains(&task) {
        return incompatible(format!(
            "{} has no task {} labels",
            target.name,
            task.number()
        ));
    }
    let examples = match examples_for_split(&target.manifest, task, target.split, source.featurizer) {
        Ok(e) => e,
        Err(Error::Shape(m)) => return incompatible(format!("input mismatch: {m}")),
        Err(e) => return Err(e),
    };
    if examples.is_empty() {
        return incompatible(format!(
            "{} has no {} samples labelled for task {}",
            target.name,
            target.split,
            task.number()
        ));
    }
    match evaluate(&source.model, &examples) {
        Ok(ev) => Ok(CellOutcome::Scored {
            weighted_f1: ev.report.weighted_f1,
            report: ev.report.with_class_names(&task.class_names())?,
        }),
        Err(Error::Shape(m)) => incompatible(format!("input mismatch: {m}")),
        Err(e) => Err(e),
    }
}

impl TransferMatrix {
    pub fn cell(&self, train: usize, test: usize) -> &TransferCell {
        &self.cells[train * self.test_datasets.len() + test]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Rows are training datasets, columns test datasets; cells hold the
    /// weighted F1 or `n/a` for incompatible pairs.
    pub fn to_table(&self) -> String {
        let mut header = vec!["train \\ test".to_string()];
        header.extend(self.test_datasets.iter().cloned());
        let mut t = TextTable::new(header);
        for (i, name) in self.train_datasets.iter().enumerate() {
            let mut row = vec![name.clone()];
            for j in 0..self.test_datasets.len() {
                row.push(self.cell(i, j).weighted_f1().map_or("n/a".into(), fmt3));
            }
            t.row(row);
        }
        t.render()
    }
}
