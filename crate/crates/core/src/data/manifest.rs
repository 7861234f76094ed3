use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde_json::{Map, Value};

use super::{DatasetManifest, Hatefulness, MemeSample, Split, TaskLabel, Target};
use crate::error::{Error, Result};

/// A manifest record that failed validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Reject {
    /// 1-based line number in the source file.
    pub line: usize,
    pub field: Option<String>,
    pub error: String,
    pub raw: String,
}

#[derive(Debug, Clone)]
pub struct ManifestLoad {
    pub manifest: DatasetManifest,
    pub rejects: Vec<Reject>,
}

/// Reads a JSON-lines manifest. Invalid records are collected in `rejects`
/// rather than failing the whole load; blank lines are skipped.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<ManifestLoad> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;

    let mut samples = Vec::new();
    let mut rejects = Vec::new();
    let mut seen = HashSet::new();
    let mut records = 0usize;

    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records += 1;
        let lineno = idx + 1;
        match parse_record(&line) {
            Ok(sample) => {
                if !seen.insert(sample.id.clone()) {
                    rejects.push(Reject {
                        line: lineno,
                        field: Some("id".into()),
                        error: format!("duplicate id {:?}", sample.id),
                        raw: line,
                    });
                } else {
                    samples.push(sample);
                }
            }
            Err((field, error)) => rejects.push(Reject {
                line: lineno,
                field,
                error,
                raw: line,
            }),
        }
    }

    if records == 0 {
        return Err(Error::EmptyManifest(path.to_path_buf()));
    }

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let manifest = DatasetManifest::new(name, "", samples)?;
    Ok(ManifestLoad { manifest, rejects })
}

type FieldError = (Option<String>, String);

fn parse_record(line: &str) -> std::result::Result<MemeSample, FieldError> {
    let value: Value =
        serde_json::from_str(line).map_err(|e| (None, format!("malformed JSON: {e}")))?;
    let Value::Object(obj) = value else {
        return Err((None, "record is not a JSON object".into()));
    };

    let id = required_str(&obj, "id")?;
    if id.is_empty() {
        return Err((Some("id".into()), "id is empty".into()));
    }
    let image_ref = required_str(&obj, "image_ref")?;
    let caption = required_str(&obj, "caption")?;
    if caption.trim().is_empty() {
        return Err((
            Some("caption".into()),
            "caption is empty after trimming".into(),
        ));
    }
    let task1: Hatefulness = required_str(&obj, "task1")?
        .parse()
        .map_err(|e: Error| (Some("task1".into()), e.to_string()))?;
    let task2: Option<Target> = optional_str(&obj, "task2")?
        .map(|s| s.parse())
        .transpose()
        .map_err(|e: Error| (Some("task2".into()), e.to_string()))?;
    let split: Split = optional_str(&obj, "split")?
        .map(|s| s.parse())
        .transpose()
        .map_err(|e: Error| (Some("split".into()), e.to_string()))?
        .unwrap_or_default();

    let labels = TaskLabel::new(task1, task2).map_err(|_| {
        (
            Some("task2".into()),
            "invariant violated: task2 requires task1 = HT".to_string(),
        )
    })?;

    Ok(MemeSample {
        id: id.to_owned(),
        image_ref: image_ref.to_owned(),
        caption: caption.to_owned(),
        labels,
        split,
    })
}

fn required_str<'a>(obj: &'a Map<String, Value>, key: &str) -> std::result::Result<&'a str, FieldError> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err((Some(key.into()), format!("{key} must be a string"))),
        None => Err((Some(key.into()), format!("missing field {key}"))),
    }
}

fn optional_str<'a>(
    obj: &'a Map<String, Value>,
    key: &str,
) -> std::result::Result<Option<&'a str>, FieldError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(_) => Err((Some(key.into()), format!("{key} must be a string or null"))),
    }
}

pub(crate) fn record_json(sample: &MemeSample) -> Value {
    let mut obj = Map::new();
    obj.insert("id".into(), Value::String(sample.id.clone()));
    obj.insert("image_ref".into(), Value::String(sample.image_ref.clone()));
    obj.insert("caption".into(), Value::String(sample.caption.clone()));
    obj.insert(
        "task1".into(),
        Value::String(sample.labels.task1().code().into()),
    );
    obj.insert(
        "task2".into(),
        sample
            .labels
            .task2()
            .map_or(Value::Null, |t| Value::String(t.code().into())),
    );
    obj.insert(
        "split".into(),
        match sample.split {
            Split::Unassigned => Value::Null,
            s => Value::String(s.as_str().into()),
        },
    );
    Value::Object(obj)
}

/// Writes the manifest in the same JSON-lines format `load_manifest` reads.
pub fn save_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for sample in manifest.samples() {
        serde_json::to_writer(&mut w, &record_json(sample))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Rejected records in manifest format plus `line`, `field` and `error` keys.
/// Lines that are not JSON objects keep their text under `raw`.
pub fn write_reject_report(rejects: &[Reject], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in rejects {
        let mut obj = match serde_json::from_str::<Value>(&r.raw) {
            Ok(Value::Object(obj)) => obj,
            _ => {
                let mut obj = Map::new();
                obj.insert("raw".into(), Value::String(r.raw.clone()));
                obj
            }
        };
        obj.insert("line".into(), Value::from(r.line));
        obj.insert(
            "field".into(),
            r.field.clone().map_or(Value::Null, Value::String),
        );
        obj.insert("error".into(), Value::String(r.error.clone()));
        serde_json::to_writer(&mut w, &Value::Object(obj))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
