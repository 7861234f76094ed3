//! Samples, labels, splits and the JSON-lines manifest format.

mod manifest;
mod split;

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use manifest::{load_manifest, save_manifest, write_reject_report, ManifestLoad, Reject};
pub use split::{split_dataset, SplitRatios};

/// Task 1 label: hateful or not hateful.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Hatefulness {
    #[serde(rename = "HT")]
    Hateful,
    #[serde(rename = "NHT")]
    NotHateful,
}

/// Task 2 label: who a hateful meme targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Target {
    #[serde(rename = "TI")]
    Individual,
    #[serde(rename = "TO")]
    Organization,
    #[serde(rename = "TC")]
    Community,
    #[serde(rename = "TS")]
    Society,
}

impl Hatefulness {
    pub const ALL: [Hatefulness; 2] = [Hatefulness::Hateful, Hatefulness::NotHateful];

    pub fn code(self) -> &'static str {
        match self {
            Hatefulness::Hateful => "HT",
            Hatefulness::NotHateful => "NHT",
        }
    }
}

impl Target {
    pub const ALL: [Target; 4] = [
        Target::Individual,
        Target::Organization,
        Target::Community,
        Target::Society,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Target::Individual => "TI",
            Target::Organization => "TO",
            Target::Community => "TC",
            Target::Society => "TS",
        }
    }
}

impl FromStr for Hatefulness {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "HT" => Ok(Hatefulness::Hateful),
            "NHT" => Ok(Hatefulness::NotHateful),
            other => Err(Error::invalid(format!("unknown task1 label {other:?}"))),
        }
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Target::ALL
            .into_iter()
            .find(|t| t.code() == s)
            .ok_or_else(|| Error::invalid(format!("unknown task2 label {s:?}")))
    }
}

/// Labels for both tasks. A target exists only for hateful memes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TaskLabel {
    task1: Hatefulness,
    task2: Option<Target>,
}

impl TaskLabel {
    pub fn new(task1: Hatefulness, task2: Option<Target>) -> Result<Self> {
        if task2.is_some() && task1 != Hatefulness::Hateful {
            return Err(Error::invalid(
                "task2 label is only allowed when task1 = HT",
            ));
        }
        Ok(TaskLabel { task1, task2 })
    }

    pub fn not_hateful() -> Self {
        TaskLabel {
            task1: Hatefulness::NotHateful,
            task2: None,
        }
    }

    pub fn hateful(target: Option<Target>) -> Self {
        TaskLabel {
            task1: Hatefulness::Hateful,
            task2: target,
        }
    }

    pub fn task1(&self) -> Hatefulness {
        self.task1
    }

    pub fn task2(&self) -> Option<Target> {
        self.task2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Split {
    Train,
    Valid,
    Test,
    #[default]
    Unassigned,
}

impl Split {
    pub const ASSIGNED: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "validation" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            "unassigned" => Ok(Split::Unassigned),
            other => Err(Error::invalid(format!("unknown split {other:?}"))),
        }
    }
}

/// Which classification problem a model or count refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskId {
    /// Hateful meme detection (HT / NHT).
    #[serde(rename = "1")]
    Detection,
    /// Target identification (TI / TO / TC / TS).
    #[serde(rename = "2")]
    Target,
}

impl TaskId {
    pub fn number(self) -> u8 {
        match self {
            TaskId::Detection => 1,
            TaskId::Target => 2,
        }
    }

    pub fn class_names(self) -> Vec<&'static str> {
        match self {
            TaskId::Detection => Hatefulness::ALL.iter().map(|l| l.code()).collect(),
            TaskId::Target => Target::ALL.iter().map(|l| l.code()).collect(),
        }
    }

    pub fn class_count(self) -> usize {
        match self {
            TaskId::Detection => 2,
            TaskId::Target => 4,
        }
    }

    /// Class index of a sample for this task, `None` when the sample has no label for it.
    pub fn class_index(self, labels: &TaskLabel) -> Option<usize> {
        match self {
            TaskId::Detection => Some(match labels.task1 {
                Hatefulness::Hateful => 0,
                Hatefulness::NotHateful => 1,
            }),
            TaskId::Target => labels
                .task2
                .map(|t| Target::ALL.iter().position(|x| *x == t).unwrap()),
        }
    }
}

impl TryFrom<u8> for TaskId {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        match value {
            1 => Ok(TaskId::Detection),
            2 => Ok(TaskId::Target),
            other => Err(Error::UnknownTask(other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemeSample {
    pub id: String,
    pub image_ref: String,
    pub caption: String,
    pub labels: TaskLabel,
    pub split: Split,
}

impl MemeSample {
    pub fn new(
        id: impl Into<String>,
        image_ref: impl Into<String>,
        caption: impl Into<String>,
        labels: TaskLabel,
    ) -> Result<Self> {
        let caption = caption.into();
        if caption.trim().is_empty() {
            return Err(Error::invalid("caption is empty after trimming"));
        }
        Ok(MemeSample {
            id: id.into(),
            image_ref: image_ref.into(),
            caption,
            labels,
            split: Split::Unassigned,
        })
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub name: String,
    pub language_tag: String,
    samples: Vec<MemeSample>,
}

impl DatasetManifest {
    /// Builds a manifest, rejecting duplicate ids.
    pub fn new(
        name: impl Into<String>,
        language_tag: impl Into<String>,
        samples: Vec<MemeSample>,
    ) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(samples.len());
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::invalid(format!("duplicate id {:?}", s.id)));
            }
        }
        Ok(DatasetManifest {
            name: name.into(),
            language_tag: language_tag.into(),
            samples,
        })
    }

    pub fn samples(&self) -> &[MemeSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &MemeSample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub(crate) fn samples_mut(&mut self) -> &mut [MemeSample] {
        &mut self.samples
    }
}

/// Per-label counts for one task, optionally restricted to a split.
///
/// Every label of the task appears in the result, with zero when absent.
pub fn class_distribution(
    manifest: &DatasetManifest,
    task: TaskId,
    split: Option<Split>,
) -> IndexMap<&'static str, usize> {
    let names = task.class_names();
    let mut counts = vec![0usize; names.len()];
    for sample in manifest.samples() {
        if split.is_some_and(|s| s != sample.split) {
            continue;
        }
        if let Some(idx) = task.class_index(&sample.labels) {
            counts[idx] += 1;
        }
    }
    names.into_iter().zip(counts).collect()
}

/// [`class_distribution`] keyed by a raw task number, as read from a command line.
pub fn class_distribution_for(
    manifest: &DatasetManifest,
    task: u8,
    split: Option<Split>,
) -> Result<IndexMap<&'static str, usize>> {
    Ok(class_distribution(manifest, TaskId::try_from(task)?, split))
}
