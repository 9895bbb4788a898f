//! Synthetic training data generation and invariance probing for linear
//! object detectors.
//!
//! The pipeline renders procedural or OBJ meshes under a background/texture
//! configuration, samples labeled patches, extracts features with a pluggable
//! backend, trains per-category linear SVMs, and evaluates them with
//! PASCAL-style average precision.

// Negated comparisons are used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod features;
pub mod geometry;
pub mod imaging;
pub mod patches;
pub mod references;
pub mod render;
pub mod rng;
pub mod scene;

pub use error::{Error, Result};
