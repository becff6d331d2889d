//! Plan-guided, context-aware document simplification at desk scale.
//!
//! The crate bundles a synthetic aligned corpus, a small transformer
//! encoder-decoder with an optional context cross-attention path, a
//! sentence-operation planner, document-level inference drivers, and
//! evaluation metrics.

pub mod autograd;
pub mod cli;
pub mod context;
pub mod corpus;
pub mod error;
pub mod layers;
pub mod metrics;
pub mod params;
pub mod pipeline;
pub mod planner;
pub mod seq2seq;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
