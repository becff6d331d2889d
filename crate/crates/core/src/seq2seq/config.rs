use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttentionMode {
    Full,
    /// Encoder self-attention restricted to a band of +-w positions, with
    /// control tokens and BOS attending (and attended) globally.
    Sliding,
}

impl fmt::Display for AttentionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttentionMode::Full => "full",
            AttentionMode::Sliding => "sliding",
        })
    }
}

impl FromStr for AttentionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(AttentionMode::Full),
            "sliding" => Ok(AttentionMode::Sliding),
            _ => Err(Error::Config(format!("unknown attention mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
    pub dropout: f64,
    /// Adds a cross-attention sublayer over the context window to every
    /// decoder block.
    pub context_attention: bool,
    /// Width of the context window vectors.
    pub d_ctx: usize,
    /// Dedicated layer norm in front of the context sublayer.
    pub context_norm: bool,
    pub attention_mode: AttentionMode,
    pub sliding_window: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 0,
            d_model: 64,
            n_heads: 4,
            n_enc_layers: 2,
            n_dec_layers: 2,
            ffn_dim: 128,
            max_len: 1024,
            dropout: 0.1,
            context_attention: false,
            d_ctx: 64,
            context_norm: true,
            attention_mode: AttentionMode::Full,
            sliding_window: 32,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 {
            return Err(Error::Config("vocab_size must be positive".into()));
        }
        if self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.max_len < 2 {
            return Err(Error::Config("max_len must allow at least BOS and EOS".into()));
        }
        Ok(())
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let (d, v, f) = (self.d_model, self.vocab_size, self.ffn_dim);
        let attn = 4 * d * d + 4 * d;
        let ln = 2 * d;
        let ffn = 2 * d * f + f + d;
        let enc_layer = attn + 2 * ln + ffn;
        let dec_layer = 2 * attn + 3 * ln + ffn + if self.context_attention { self.context_sublayer_params() } else { 0 };
        v * d + self.max_len * d + self.n_enc_layers * enc_layer + self.n_dec_layers * dec_layer + 2 * ln + d * v + v
    }

    /// Parameters of one context cross-attention sublayer and its norm.
    pub fn context_sublayer_params(&self) -> usize {
        let (d, c) = (self.d_model, self.d_ctx);
        let attn = 2 * d * d + 2 * c * d + 4 * d;
        attn + if self.context_norm { 2 * d } else { 0 }
    }

    pub fn to_header(&self) -> BTreeMap<String, String> {
        let mut h = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            h.insert(k.to_string(), v);
        };
        put("vocab_size", self.vocab_size.to_string());
        put("d_model", self.d_model.to_string());
        put("n_heads", self.n_heads.to_string());
        put("n_enc_layers", self.n_enc_layers.to_string());
        put("n_dec_layers", self.n_dec_layers.to_string());
        put("ffn_dim", self.ffn_dim.to_string());
        put("max_len", self.max_len.to_string());
        put("dropout", self.dropout.to_string());
        put("context_attention", self.context_attention.to_string());
        put("d_ctx", self.d_ctx.to_string());
        put("context_norm", self.context_norm.to_string());
        put("attention_mode", self.attention_mode.to_string());
        put("sliding_window", self.sliding_window.to_string());
        h
    }

    pub fn from_header(h: &BTreeMap<String, String>) -> Result<Self> {
        fn get<T: FromStr>(h: &BTreeMap<String, String>, k: &str) -> Result<T> {
            let raw = h.get(k).ok_or_else(|| Error::Checkpoint(format!("config key {k} missing")))?;
            raw.parse().map_err(|_| Error::Checkpoint(format!("config key {k} has invalid value {raw:?}")))
        }
        let c = ModelConfig {
            vocab_size: get(h, "vocab_size")?,
            d_model: get(h, "d_model")?,
            n_heads: get(h, "n_heads")?,
            n_enc_layers: get(h, "n_enc_layers")?,
            n_dec_layers: get(h, "n_dec_layers")?,
            ffn_dim: get(h, "ffn_dim")?,
            max_len: get(h, "max_len")?,
            dropout: get(h, "dropout")?,
            context_attention: get(h, "context_attention")?,
            d_ctx: get(h, "d_ctx")?,
            context_norm: get(h, "context_norm")?,
            attention_mode: get(h, "attention_mode")?,
            sliding_window: get(h, "sliding_window")?,
        };
        c.validate()?;
        Ok(c)
    }
}
