//! Convolutional networks with per-input generated filters for sentence
//! classification and sentence-pair matching.
//!
//! A small filter-generation network reads a sentence, summarizes it into a
//! code vector and emits a bank of convolution filters; those filters are
//! then applied to the same sentence (classification) or to the paired
//! sentence (question/answer matching). Everything is trained end to end on a
//! self-contained reverse-mode differentiation engine in double precision.

pub mod check;
pub mod cli;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result, TensorError};
