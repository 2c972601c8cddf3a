//! Interaction-aware, multi-modal motion prediction for vehicles in urban
//! layouts.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the CLI and the
//! scenario harness live in the `iamp` crate.

#![no_std]

extern crate alloc;

pub mod accel;
pub mod corridor;
pub mod fusion;
pub mod geometry;
pub mod intention;
pub mod map;
pub mod markov;
pub mod predict;
pub mod relations;
