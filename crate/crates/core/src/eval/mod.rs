//! Classification metrics, the ablation grid and the transfer matrix.

mod ablation;
mod table;
mod transfer;

pub use ablation::{run_ablation, AblationData, AblationRow, AblationTable};
pub use table::TextTable;
pub use transfer::{
    transfer_eval, CellOutcome, TransferCell, TransferMatrix, TransferSource, TransferTarget,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<ClassMetrics>,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    /// Unweighted mean over all classes, including those with no support.
    pub macro_f1: f64,
    pub accuracy: f64,
    /// `confusion[gold][predicted]`
    pub confusion: Vec<Vec<usize>>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class and aggregate metrics. Undefined precision, recall or F1
/// (zero denominator) is reported as 0.
pub fn compute_report(predictions: &[usize], golds: &[usize], class_count: usize) -> Result<EvalReport> {
    if predictions.len() != golds.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} gold labels",
            predictions.len(),
            golds.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::invalid("no predictions to score"));
    }
    if class_count == 0 {
        return Err(Error::invalid("class_count must be >= 1"));
    }
    let mut confusion = vec![vec![0usize; class_count]; class_count];
    for (i, (&p, &g)) in predictions.iter().zip(golds).enumerate() {
        if p >= class_count || g >= class_count {
            return Err(Error::invalid(format!(
                "pair {i} ({p}, {g}) is outside 0..{class_count}"
            )));
        }
        confusion[g][p] += 1;
    }

    let n = predictions.len();
    let mut classes = Vec::with_capacity(class_count);
    let (mut wp, mut wr, mut wf, mut macro_sum, mut correct) = (0.0, 0.0, 0.0, 0.0, 0usize);
    for c in 0..class_count {
        let tp = confusion[c][c];
        let support: usize = confusion[c].iter().sum();
        let predicted: usize = confusion.iter().map(|row| row[c]).sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let w = support as f64;
        wp += w * precision;
        wr += w * recall;
        wf += w * f1;
        macro_sum += f1;
        correct += tp;
        classes.push(ClassMetrics {
            name: c.to_string(),
            precision,
            recall,
            f1,
            support,
        });
    }
    let total = n as f64;
    Ok(EvalReport {
        classes,
        weighted_precision: wp / total,
        weighted_recall: wr / total,
        weighted_f1: wf / total,
        macro_f1: macro_sum / class_count as f64,
        accuracy: correct as f64 / total,
        confusion,
    })
}

impl EvalReport {
    /// Replaces the default index names (`"0"`, `"1"`, ...).
    pub fn with_class_names(mut self, names: &[&str]) -> Result<Self> {
        if names.len() != self.classes.len() {
            return Err(Error::shape(format!(
                "{} names for {} classes",
                names.len(),
                self.classes.len()
            )));
        }
        for (c, n) in self.classes.iter_mut().zip(names) {
            c.name = (*n).to_string();
        }
        Ok(self)
    }

    pub fn prediction_count(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Class-wise table with macro and weighted F1 rows, followed by the
    /// confusion matrix.
    pub fn to_table(&self) -> String {
        let mut t = TextTable::new(["Class", "P", "R", "F1", "Support"]);
        for c in &self.classes {
            t.row([
                c.name.clone(),
                fmt3(c.precision),
                fmt3(c.recall),
                fmt3(c.f1),
                c.support.to_string(),
            ]);
        }
        t.rule();
        let n = self.prediction_count().to_string();
        t.row(["Ma.F1".into(), String::new(), String::new(), fmt3(self.macro_f1), n.clone()]);
        t.row([
            "W.F1".into(),
            fmt3(self.weighted_precision),
            fmt3(self.weighted_recall),
            fmt3(self.weighted_f1),
            n,
        ]);
        let mut out = t.render();
        out.push('\n');
        let mut header = vec!["gold \\ pred".to_string()];
        header.extend(self.classes.iter().map(|c| c.name.clone()));
        let mut cm = TextTable::new(header);
        for (c, row) in self.classes.iter().zip(&self.confusion) {
            let mut cells = vec![c.name.clone()];
            cells.extend(row.iter().map(|v| v.to_string()));
            cm.row(cells);
        }
        out.push_str(&cm.render());
        out
    }
}

pub(crate) fn fmt3(x: f64) -> String {
    format!("{x:.3}")
}
