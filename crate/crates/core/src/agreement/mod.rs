//! Inter-annotator agreement and caption statistics.

mod text;

pub use text::{
    jaccard_top_words, length_histogram, lexical_stats, tokenize, top_words, LexicalStats,
    TokenizeOptions,
};

use std::collections::HashMap;
use std::fmt::Display;
use std::hash::Hash;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::TextTable;

/// Labels from two annotators over the same items, aligned by item id.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationPair {
    pub ids: Vec<String>,
    pub labels_a: Vec<String>,
    pub labels_b: Vec<String>,
}

impl AnnotationPair {
    /// Aligns two id→label maps in the order of `a`. Both must cover exactly
    /// the same items.
    pub fn from_maps(a: &IndexMap<String, String>, b: &IndexMap<String, String>) -> Result<Self> {
        if let Some(id) = a.keys().find(|k| !b.contains_key(*k)) {
            return Err(Error::invalid(format!("item {id} has no label from annotator B")));
        }
        if let Some(id) = b.keys().find(|k| !a.contains_key(*k)) {
            return Err(Error::invalid(format!("item {id} has no label from annotator A")));
        }
        Ok(AnnotationPair {
            ids: a.keys().cloned().collect(),
            labels_a: a.values().cloned().collect(),
            labels_b: a.keys().map(|k| b[k].clone()).collect(),
        })
    }

    /// Distinct labels in order of first appearance (A before B per item).
    pub fn label_set(&self) -> Vec<String> {
        let mut seen: Vec<String> = Vec::new();
        for (x, y) in self.labels_a.iter().zip(&self.labels_b) {
            for l in [x, y] {
                if !seen.contains(l) {
                    seen.push(l.clone());
                }
            }
        }
        seen
    }
}

fn counts<L: Eq + Hash + Display>(
    a: &[L],
    b: &[L],
    label_set: &[L],
) -> Result<(usize, usize, Vec<(usize, usize)>)> {
    if a.len() != b.len() {
        return Err(Error::shape(format!(
            "annotator A has {} labels, annotator B has {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::invalid("no annotations"));
    }
    let index: HashMap<&L, usize> = label_set.iter().enumerate().map(|(i, l)| (l, i)).collect();
    let mut marginals = vec![(0usize, 0usize); label_set.len()];
    let mut agree = 0;
    for (x, y) in a.iter().zip(b) {
        let i = *index
            .get(x)
            .ok_or_else(|| Error::invalid(format!("label {x} is not in the label set")))?;
        let j = *index
            .get(y)
            .ok_or_else(|| Error::invalid(format!("label {y} is not in the label set")))?;
        marginals[i].0 += 1;
        marginals[j].1 += 1;
        agree += usize::from(i == j);
    }
    Ok((a.len(), agree, marginals))
}

/// Cohen's kappa between two annotators.
///
/// Computed from integer counts as `(n·agree − Σ a_k·b_k) / (n² − Σ a_k·b_k)`,
/// which makes it exactly symmetric in the two annotators. When chance
/// agreement is 1 (both annotators used a single label throughout) the
/// result is 1.
pub fn cohens_kappa<L: Eq + Hash + Display>(labels_a: &[L], labels_b: &[L], label_set: &[L]) -> Result<f64> {
    let (n, agree, marginals) = counts(labels_a, labels_b, label_set)?;
    let n = n as u128;
    let chance: u128 = marginals.iter().map(|&(x, y)| x as u128 * y as u128).sum();
    if chance == n * n {
        if agree as u128 == n {
            return Ok(1.0);
        }
        return Err(Error::DegenerateAgreement {
            observed: agree as f64 / n as f64,
        });
    }
    let num = (n * agree as u128) as f64 - chance as f64;
    Ok(num / (n * n - chance) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelKappa {
    pub label: String,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub per_label: Vec<LabelKappa>,
    /// Unweighted mean of the per-label scores.
    pub average: f64,
}

/// One-vs-rest kappa for every label in `label_set`.
pub fn per_label_kappa<L: Eq + Hash + Display>(
    labels_a: &[L],
    labels_b: &[L],
    label_set: &[L],
) -> Result<AgreementReport> {
    counts(labels_a, labels_b, label_set)?;
    if label_set.is_empty() {
        return Err(Error::invalid("empty label set"));
    }
    let per_label = label_set
        .iter()
        .map(|k| {
            let bin = |xs: &[L]| xs.iter().map(|x| x == k).collect::<Vec<bool>>();
            Ok(LabelKappa {
                label: k.to_string(),
                kappa: cohens_kappa(&bin(labels_a), &bin(labels_b), &[true, false])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let average = per_label.iter().map(|l| l.kappa).sum::<f64>() / per_label.len() as f64;
    Ok(AgreementReport { per_label, average })
}

impl AgreementReport {
    /// Per-label rows with the average on the first row of each section.
    pub fn render_sections(sections: &[(&str, &AgreementReport)]) -> String {
        let mut t = TextTable::new(["", "Label", "Kappa", "Average"]);
        for (i, (title, report)) in sections.iter().enumerate() {
            if i > 0 {
                t.rule();
            }
            for (j, l) in report.per_label.iter().enumerate() {
                let (title, avg) = if j == 0 {
                    (title.to_string(), format!("{:.4}", report.average))
                } else {
                    (String::new(), String::new())
                };
                t.row([title, l.label.clone(), format!("{:.4}", l.kappa), avg]);
            }
        }
        t.render()
    }
}
