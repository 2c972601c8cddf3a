//! Learned acceleration profiles: feature extraction, the linear
//! autoregressive model and conversion of profiles to input distributions.

mod distribution;
mod features;
mod model;

pub use distribution::{
    cell_masses, normal_mass, profile_to_distributions, AccelDistribution, PREDICTION_STEPS, SIGMA_FLOOR,
};
pub use features::{
    extract_features, index, select_others, FeatureVector, HistorySample, IntersectionVehicle, Priority,
    FEATURES_PER_STEP, FEATURE_LEN, HISTORY_DT, HISTORY_STEPS, SENTINEL_DISTANCE,
};
pub use model::{infer, train, ARModel, TrainConfig, TrainingMeta, TrainingSample};

use thiserror::Error;

/// Samples in a predicted profile (0.1 s spacing over 4 s).
pub const PROFILE_LEN: usize = 40;
pub const PROFILE_DT: f64 = 0.1;
pub const ACCEL_MIN: f64 = -3.0;
pub const ACCEL_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelProfile(pub [f64; PROFILE_LEN]);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AccelError {
    #[error("history does not cover the 4 s window at 0.4 s or finer")]
    InsufficientHistory,
    #[error("non-finite value")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("normalization ranges must satisfy max > min")]
    InvalidNormalization,
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid training configuration")]
    InvalidConfig,
    #[error("loss became non-finite in epoch {epoch}")]
    Diverged { epoch: usize },
}
