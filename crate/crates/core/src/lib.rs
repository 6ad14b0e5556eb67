//! Semantic-ID tokenizer with adaptive overlap regulation.
//!
//! Item feature vectors are encoded, residual-quantized into short code
//! sequences, and decoded. Training combines reconstruction and
//! residual-quantization losses with a collision term over in-batch SID
//! overlaps (semantically gated and load-scaled) and an in-batch contrastive
//! alignment between collaborative item pairs, weighted by a
//! progress-dependent schedule.

pub mod cli;
pub mod collaborative;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod numeric;
pub mod overlap;
pub mod schedule;
pub mod sid_table;
pub mod tokenizer;
pub mod trainer;

pub use error::{Error, ErrorClass, Result};
