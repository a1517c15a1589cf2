//! The learning-based engine: per-shot MFCC and visual statistics, greedy
//! feature selection, and a logistic-regression shot classifier.

pub mod extract;
pub mod logistic;
pub mod mfcc;
pub mod model;
pub mod select;

use thiserror::Error;

pub use extract::{extract_features, feature_names, FeatureVector, FEATURE_LEN};
pub use mfcc::{mfcc, Mfcc, MfccConfig};
pub use model::{
    classify_segment_features, shot_features, train_classifier, FeatureDecision, LabeledExample, ModelConfig,
    NormStats, ShotDecision, TrainedModel, PROGRAM_LABEL,
};
pub use select::{select_features, stratified_split, DEFAULT_FOLD_SEED, DEFAULT_K_MAX};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("audio has {samples} samples, one analysis frame needs {needed}")]
    AudioTooShort { samples: usize, needed: usize },
    #[error("invalid MFCC configuration: {0}")]
    BadConfig(String),
    #[error("shot has no frames")]
    EmptyShot,
    #[error("invalid feature vector: {0}")]
    BadFeatureVector(String),
    #[error("degenerate training set: {0}")]
    DegenerateTrainingSet(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
}
