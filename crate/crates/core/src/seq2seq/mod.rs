//! Encoder-decoder simplifier: tokenizer, model, and decoding.

pub mod config;
pub mod generate;
pub mod model;
pub mod tokenizer;

pub use config::{AttentionMode, ModelConfig};
pub use generate::{GenConfig, GenRequest};
pub use model::{Example, Seq2SeqModel};
pub use tokenizer::Tokenizer;
