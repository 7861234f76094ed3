use std::fs::File;

use anyhow::{bail, Context, Result};
use dora_core::agreement::{cohens_kappa, per_label_kappa, AgreementReport, AnnotationPair};
use indexmap::IndexMap;
use serde::Serialize;

use super::{display, resolve_config, Output, EXIT_OK};
use crate::KappaArgs;

#[derive(Serialize)]
struct Section {
    title: String,
    items: usize,
    labels: Vec<String>,
    kappa: f64,
    per_label: AgreementReport,
}

type Labels = IndexMap<String, String>;

fn read_annotations(args: &KappaArgs) -> Result<IndexMap<String, (Labels, Labels)>> {
    let file = File::open(&args.annotations)
        .with_context(|| format!("opening {}", args.annotations.display()))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(id), Some(a), Some(b)) = (col("id"), col("annotator_a"), col("annotator_b")) else {
        bail!("{} needs id, annotator_a and annotator_b columns", args.annotations.display());
    };
    let task = col("task");
    let mut groups: IndexMap<String, (Labels, Labels)> = IndexMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let get = |c: usize| {
            record
                .get(c)
                .filter(|v| !v.is_empty())
                .map(str::to_string)
                .with_context(|| format!("line {line}: missing {}", &headers[c]))
        };
        let title = match task {
            Some(t) => {
                let v = get(t)?;
                if v.chars().all(|c| c.is_ascii_digit()) {
                    format!("Task {v}")
                } else {
                    v
                }
            }
            None => "All".to_string(),
        };
        let group = groups.entry(title).or_default();
        let item = get(id)?;
        if group.0.contains_key(&item) {
            bail!("line {line}: item {item} appears twice");
        }
        group.0.insert(item.clone(), get(a)?);
        group.1.insert(item, get(b)?);
    }
    if groups.is_empty() {
        bail!("{} has no annotations", args.annotations.display());
    }
    Ok(groups)
}

pub fn kappa(args: KappaArgs) -> Result<u8> {
    let cfg = resolve_config(&args.common, None)?;
    let out = Output::create(&args.common)?;
    let mut inputs = vec![("annotations", display(&args.annotations))];
    if let Some(l) = &args.labels {
        inputs.push(("labels", l.clone()));
    }
    out.write_spec("kappa", &inputs, &cfg)?;

    let fixed: Option<Vec<String>> = args
        .labels
        .as_ref()
        .map(|l| l.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect());
    let mut sections = Vec::new();
    for (title, (a, b)) in read_annotations(&args)? {
        let pair = AnnotationPair::from_maps(&a, &b)?;
        let labels = match &fixed {
            Some(f) => f.clone(),
            None => pair.label_set(),
        };
        let kappa = cohens_kappa(&pair.labels_a, &pair.labels_b, &labels).with_context(|| title.clone())?;
        let per_label = per_label_kappa(&pair.labels_a, &pair.labels_b, &labels).with_context(|| title.clone())?;
        sections.push(Section {
            title,
            items: pair.ids.len(),
            labels,
            kappa,
            per_label,
        });
    }

    let refs: Vec<(&str, &AgreementReport)> = sections.iter().map(|s| (s.title.as_str(), &s.per_label)).collect();
    let mut text = AgreementReport::render_sections(&refs);
    text.push('\n');
    for s in &sections {
        text.push_str(&format!("{}: kappa = {:.4} over {} items\n", s.title, s.kappa, s.items));
    }
    out.write_json("kappa.json", &sections)?;
    out.write("kappa.txt", &text)?;
    print!("{text}");
    Ok(EXIT_OK)
}
