//! Core of a two-stage distillation engine that compresses a multi-modal graph
//! recommender (the teacher) into an ID-embedding LightGCN recommender (the student).
//!
//! The crate is `no_std` and needs only `alloc`. Everything here is pure
//! computation: matrices, samplers, models, losses with hand-derived gradients,
//! the all-ranking evaluator, and the training loops. File formats and the
//! command-line front end live in the `mmdistill` crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod data;
pub mod distill;
pub mod error;
pub mod eval;
pub mod graph;
pub mod math;
pub mod numerics;
pub mod pca;
pub mod pipeline;
pub mod propagate;
pub mod student;
pub mod teacher;

pub use error::{Error, Result};
