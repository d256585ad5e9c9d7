//! Trainability landscapes of a small decoder-only character transformer.
//!
//! The crate trains the model under two learning rates (attention parameters
//! and everything else), scores every run with a bounded convergence measure,
//! sweeps the two rates over a grid, and measures the box-counting dimension
//! of the boundary between convergent and divergent cells.

// Range checks are written as `!(x > lo)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod diffcore;
pub mod error;
pub mod fractal;
pub mod model;
pub mod render;
pub mod sweep;
pub mod training;

pub use error::{Error, Result};
