use rayon::prelude::*;
use serde::Serialize;

use super::{fmt3, EvalReport, TextTable};
use crate::coattention::{AblationVariant, Component};
use crate::dataset::Example;
use crate::error::{Error, Result};
use crate::model::{DoraModel, ModelConfig};
use crate::training::{evaluate, train, TrainConfig, TrainHistory};

pub struct AblationData<'a> {
    pub train: &'a [Example],
    pub valid: &'a [Example],
    pub test: &'a [Example],
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub variant: AblationVariant,
    pub label: String,
    pub fused_width: usize,
    /// Components of the fused vector and their widths, as produced by the
    /// trained model on the first test example.
    pub provenance: Vec<(Component, usize)>,
    pub history: TrainHistory,
    /// Test-split report of the best validation epoch.
    pub report: EvalReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

/// Trains one model per variant, each from the same initialisation and
/// shuffling seed, and scores it on the test split. Rows keep the order of
/// `variants`.
pub fn run_ablation(
    data: &AblationData<'_>,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    variants: &[AblationVariant],
) -> Result<AblationTable> {
    if variants.is_empty() {
        return Err(Error::invalid("no ablation variants requested"));
    }
    if data.test.is_empty() {
        return Err(Error::EmptySplit("test".into()));
    }
    let rows = variants
        .par_iter()
        .map(|&variant| {
            run_variant(data, model_config, train_config, variant).map_err(|e| Error::Variant {
                variant: variant.code().to_string(),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationTable { rows })
}

fn run_variant(
    data: &AblationData<'_>,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    variant: AblationVariant,
) -> Result<AblationRow> {
    let mut config = model_config.clone();
    config.variant = variant;
    let model = DoraModel::init(config, train_config.seed)?;
    let outcome = train(model, data.train, data.valid, train_config, None)?;
    let fused = outcome.best.fused(&data.test[0].input)?;
    let report = evaluate(&outcome.best, data.test)?.report;
    let names = outcome.best.config.task.class_names();
    Ok(AblationRow {
        variant,
        label: variant.label().to_string(),
        fused_width: fused.width(),
        provenance: fused.provenance().to_vec(),
        history: outcome.history,
        report: report.with_class_names(&names)?,
    })
}

impl AblationTable {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Weighted precision, recall and F1 per variant.
    pub fn to_table(&self) -> String {
        let mut t = TextTable::new(["Model", "P", "R", "F1"]);
        for r in &self.rows {
            t.row([
                r.label.clone(),
                fmt3(r.report.weighted_precision),
                fmt3(r.report.weighted_recall),
                fmt3(r.report.weighted_f1),
            ]);
        }
        t.render()
    }
}
