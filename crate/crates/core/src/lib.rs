//! Bias association statistics for contextual language models.
//!
//! The crate covers the WEAT family of tests over a model-neutral
//! interchange format: sentence- and word-level SEAT, CEAT's random-effects
//! combination, the log probability bias score (LPBS), and the merged
//! LPBS×CEAT procedure. Model inference happens elsewhere; this crate reads
//! the resulting vectors and probabilities as JSONL.

pub mod analysis;
pub mod contextgen;
pub mod encodings;
pub mod error;
pub mod methods;
pub mod stats;
pub mod synthetic;
pub mod testsets;

pub use error::{Error, Result};
