//! File formats, synthetic scenarios and the end-to-end prediction harness
//! around `iamp-core`.

pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod run;
pub mod scenario;
pub mod scene;
pub mod store;
pub mod svg;
pub mod tracks;

pub use error::{Error, Result};
