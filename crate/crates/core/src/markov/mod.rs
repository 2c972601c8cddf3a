//! Longitudinal motion along a corridor abstracted to a Markov chain over
//! position, speed and input cells.

mod discretization;
mod dynamics;
mod gamma;
mod interaction;
mod sparse;
mod state;
mod transition;

pub use discretization::Discretization;
pub use dynamics::{closed_form_step, SaturatedMotion};
pub use gamma::{
    build_gamma_baseline, build_gamma_hybrid, curve_speed, layout_lambda, InputMixing, InputTransition,
};
pub use interaction::{interaction_lambda, ConflictWindow, InteractionConfig, InteractionMatrix};
pub use sparse::CscMatrix;
pub use state::{mass_before, propagate, window_mass, StateDistribution, NORMALIZATION_TOLERANCE};
pub use transition::{compute_transition_matrices, stratification, TransitionMatrices, INTERVAL_SUBSTEPS};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarkovError {
    #[error("invalid discretization")]
    InvalidDiscretization,
    #[error("samples_per_cell must be at least 1")]
    NoSamples,
    #[error("malformed matrix")]
    MalformedMatrix,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("priority vector entries must lie in [0, 1]")]
    InvalidLambda,
    #[error("probability mass drifted to {total}")]
    NormalizationDrift { total: f64 },
}
