use std::collections::BTreeMap;

use anyhow::{bail, Result};
use dora_core::agreement::{jaccard_top_words, length_histogram, lexical_stats, LexicalStats, TokenizeOptions};
use dora_core::data::{
    class_distribution, load_manifest, save_manifest, split_dataset, write_reject_report, MemeSample,
    Split, SplitRatios, TaskId,
};
use dora_core::eval::TextTable;
use indexmap::IndexMap;
use serde::Serialize;

use super::{display, load_clean_manifest, resolve_config, Output, EXIT_INPUT, EXIT_OK};
use crate::{IngestArgs, SplitArgs, StatsArgs};

pub fn ingest(args: IngestArgs) -> Result<u8> {
    let cfg = resolve_config(&args.common, None)?;
    let out = Output::create(&args.common)?;
    out.write_spec("ingest", &[("manifest", display(&args.manifest))], &cfg)?;
    let load = load_manifest(&args.manifest)?;
    save_manifest(&load.manifest, out.path("manifest.jsonl"))?;
    write_reject_report(&load.rejects, out.path("rejects.jsonl"))?;
    println!("{} samples, {} rejected", load.manifest.len(), load.rejects.len());
    for r in &load.rejects {
        let field = r.field.as_deref().map(|f| format!(" [{f}]")).unwrap_or_default();
        eprintln!("line {}{field}: {}", r.line, r.error);
    }
    Ok(if load.rejects.is_empty() { EXIT_OK } else { EXIT_INPUT })
}

pub fn split(args: SplitArgs) -> Result<u8> {
    let cfg = resolve_config(&args.common, None)?;
    let parts: Vec<f64> = args
        .ratios
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| anyhow::anyhow!("--ratios {:?}: {e}", args.ratios))?;
    let [train, valid, test] = parts[..] else {
        bail!("--ratios needs three comma-separated fractions");
    };
    let ratios = SplitRatios::new(train, valid, test)?;
    let out = Output::create(&args.common)?;
    out.write_spec(
        "split",
        &[("manifest", display(&args.manifest)), ("ratios", args.ratios.clone())],
        &cfg,
    )?;
    let load = load_manifest(&args.manifest)?;
    if !load.rejects.is_empty() {
        bail!("{} has {} invalid record(s); run `dora ingest` first", args.manifest.display(), load.rejects.len());
    }
    let split = split_dataset(&load.manifest, ratios, cfg.train.seed)?;
    save_manifest(&split, out.path("manifest.jsonl"))?;
    let table = distribution_table(&split.samples().iter().collect::<Vec<_>>());
    out.write("distribution.txt", &table)?;
    print!("{table}");
    Ok(EXIT_OK)
}

/// Counts per task, class and split, with a total column.
fn distribution_table(samples: &[&MemeSample]) -> String {
    let has_unassigned = samples.iter().any(|s| s.split == Split::Unassigned);
    let mut splits = Split::ASSIGNED.to_vec();
    if has_unassigned {
        splits.push(Split::Unassigned);
    }
    let mut header = vec!["".to_string(), "Class".to_string()];
    header.extend(splits.iter().map(|s| title(s.as_str())));
    header.push("Total".into());
    let mut t = TextTable::new(header);
    for (i, task) in [TaskId::Detection, TaskId::Target].into_iter().enumerate() {
        if i > 0 {
            t.rule();
        }
        for (c, name) in task.class_names().into_iter().enumerate() {
            let count = |split: Option<Split>| {
                samples
                    .iter()
                    .filter(|s| split.is_none_or(|x| x == s.split) && task.class_index(&s.labels) == Some(c))
                    .count()
                    .to_string()
            };
            let mut row = vec![
                if c == 0 { format!("Task {}", task.number()) } else { String::new() },
                name.to_string(),
            ];
            row.extend(splits.iter().map(|s| count(Some(*s))));
            row.push(count(None));
            t.row(row);
        }
    }
    t.render()
}

fn title(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

#[derive(Serialize)]
struct StatsReport {
    split: String,
    distribution: IndexMap<String, IndexMap<String, IndexMap<&'static str, usize>>>,
    lexical: IndexMap<&'static str, LexicalStats>,
    jaccard: Vec<JaccardRow>,
    histogram: IndexMap<&'static str, BTreeMap<usize, usize>>,
    top_n: usize,
    bin_width: usize,
}

#[derive(Serialize)]
struct JaccardRow {
    a: &'static str,
    b: &'static str,
    similarity: f64,
}

pub fn stats(args: StatsArgs) -> Result<u8> {
    let cfg = resolve_config(&args.common, None)?;
    if args.top_n == 0 {
        bail!("--top-n must be >= 1");
    }
    let filter: Option<Split> = match args.split.as_str() {
        "all" => None,
        s => Some(s.parse()?),
    };
    let opts = TokenizeOptions {
        strip_edge_punctuation: !args.keep_punctuation,
    };
    let out = Output::create(&args.common)?;
    out.write_spec(
        "stats",
        &[
            ("manifest", display(&args.manifest)),
            ("split", args.split.clone()),
            ("top_n", args.top_n.to_string()),
            ("bin_width", args.bin_width.to_string()),
            ("strip_edge_punctuation", opts.strip_edge_punctuation.to_string()),
        ],
        &cfg,
    )?;
    let manifest = load_clean_manifest(&args.manifest)?;
    let all: Vec<&MemeSample> = manifest.samples().iter().collect();

    let mut distribution = IndexMap::new();
    for task in [TaskId::Detection, TaskId::Target] {
        let mut per_split = IndexMap::new();
        for s in Split::ASSIGNED.into_iter().chain([Split::Unassigned]) {
            per_split.insert(s.as_str().to_string(), class_distribution(&manifest, task, Some(s)));
        }
        per_split.insert("total".into(), class_distribution(&manifest, task, None));
        distribution.insert(format!("task{}", task.number()), per_split);
    }

    let selected: Vec<&MemeSample> = all
        .iter()
        .copied()
        .filter(|s| filter.is_none_or(|f| f == s.split))
        .collect();
    let mut by_class: IndexMap<&'static str, Vec<&str>> = IndexMap::new();
    for task in [TaskId::Detection, TaskId::Target] {
        for (c, name) in task.class_names().into_iter().enumerate() {
            by_class.insert(
                name,
                selected
                    .iter()
                    .filter(|s| task.class_index(&s.labels) == Some(c))
                    .map(|s| s.caption.as_str())
                    .collect(),
            );
        }
    }

    let mut lexical = IndexMap::new();
    let mut histogram = IndexMap::new();
    for (name, caps) in &by_class {
        if !caps.is_empty() {
            lexical.insert(*name, lexical_stats(caps, opts)?);
        }
        histogram.insert(*name, length_histogram(caps, args.bin_width, opts)?);
    }
    let mut jaccard = Vec::new();
    for task in [TaskId::Detection, TaskId::Target] {
        let names = task.class_names();
        for i in 0..names.len() {
            for j in i + 1..names.len() {
                let (a, b) = (&by_class[names[i]], &by_class[names[j]]);
                if a.is_empty() || b.is_empty() {
                    continue;
                }
                if let Ok(similarity) = jaccard_top_words(a, b, args.top_n, opts) {
                    jaccard.push(JaccardRow {
                        a: names[i],
                        b: names[j],
                        similarity,
                    });
                }
            }
        }
    }

    let report = StatsReport {
        split: args.split.clone(),
        distribution,
        lexical,
        jaccard,
        histogram,
        top_n: args.top_n,
        bin_width: args.bin_width,
    };
    let text = render_stats(&report, &all);
    out.write_json("stats.json", &report)?;
    out.write("stats.txt", &text)?;
    print!("{text}");
    Ok(EXIT_OK)
}

fn render_stats(r: &StatsReport, all: &[&MemeSample]) -> String {
    let mut s = String::from("Class distribution\n\n");
    s.push_str(&distribution_table(all));

    s.push_str(&format!("\nCaption statistics ({} split)\n\n", r.split));
    let mut t = TextTable::new(["Class", "Captions", "Total words", "Unique words", "Avg. length"]);
    for (name, l) in &r.lexical {
        t.row([
            name.to_string(),
            l.captions.to_string(),
            l.total_words.to_string(),
            l.unique_words.to_string(),
            format!("{:.2}", l.mean_words),
        ]);
    }
    s.push_str(&t.render());

    s.push_str(&format!("\nJaccard similarity of the top {} words\n\n", r.top_n));
    let mut t = TextTable::new(["Classes", "JS"]);
    for j in &r.jaccard {
        t.row([format!("{} vs {}", j.a, j.b), format!("{:.3}", j.similarity)]);
    }
    s.push_str(&t.render());

    s.push_str(&format!("\nCaption length in words (bin width {})\n\n", r.bin_width));
    let bins: std::collections::BTreeSet<usize> = r.histogram.values().flat_map(|h| h.keys().copied()).collect();
    let mut header = vec!["Length".to_string()];
    header.extend(r.histogram.keys().map(|k| k.to_string()));
    let mut t = TextTable::new(header);
    for b in bins {
        let mut row = vec![format!("{}-{}", b * r.bin_width, (b + 1) * r.bin_width - 1)];
        row.extend(r.histogram.values().map(|h| h.get(&b).copied().unwrap_or(0).to_string()));
        t.row(row);
    }
    s.push_str(&t.render());
    s
}
