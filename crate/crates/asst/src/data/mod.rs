//! File formats, synthetic data generation and configuration.

mod annotations;
mod checkpoint;
mod config;
mod dataset;
mod features;
mod synth;

pub use annotations::{
    sha256_hex, AnnotationSet, DescriptionRecord, Manifest, Token, VideoAnnotation,
};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, NamedArray};
pub use config::{
    AppConfig, EvalSettings, ModelSettings, OptimizerChoice, Provenance, TrainingSettings,
};
pub use dataset::LoadedDataset;
pub use features::{parse_features, read_features, write_features, FeatureSequence};
pub use synth::{
    generate_synthetic, generate_videos, pattern_signatures, SyntheticSpec, SyntheticVideo,
    FILLER_TOKENS,
};
