//! Dual co-attention multimodal classification for hateful-meme detection
//! and target identification, with training, evaluation and corpus
//! statistics.

pub mod agreement;
pub mod checkpoint;
pub mod coattention;
pub mod data;
pub mod dataset;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod model;
pub mod ops;
pub mod params;
pub mod synthetic;
pub mod training;

pub use agreement::{cohens_kappa, per_label_kappa, AgreementReport, AnnotationPair, TokenizeOptions};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use coattention::{AblationVariant, CoAttentionParams, Component, FusedRepresentation, ScoreMatrix};
pub use data::{
    class_distribution, load_manifest, split_dataset, DatasetManifest, Hatefulness, MemeSample,
    Split, SplitRatios, Target, TaskId, TaskLabel,
};
pub use dataset::{examples_for_split, Example, Featurizer};
pub use encoders::{EncoderConfig, FeatureSequence, Modality};
pub use error::{Error, Result};
pub use eval::{compute_report, EvalReport};
pub use model::{DoraModel, Frontend, ModelConfig, ModelInput};
pub use params::ParamTree;
pub use training::{train, OptimizerKind, TrainConfig, TrainHistory};
