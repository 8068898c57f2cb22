//! Decoder-only transformer runtime used for activation extraction, truncation
//! and prompting baselines.
//!
//! The runtime implements a Llama-style block (RMSNorm, grouped-query attention
//! with rotary embeddings, SwiGLU feed-forward) in plain single-threaded f32
//! arithmetic so that every valid-position activation is reproducible bit for
//! bit regardless of batch composition.

mod io;
mod tokenizer;
mod transformer;

pub use io::{load_model, load_model_prefix, save_model};
pub use tokenizer::{TokenizedBatch, WordTokenizer, BOS_ID, EOS_ID, FIRST_WORD_ID, PAD_ID};
pub use transformer::{BlockWeights, ModelWeights, Transformer};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("input list is empty")]
    EmptyInput,
    #[error("text {index} is empty after whitespace stripping")]
    EmptyText { index: usize },
    #[error("text {index} tokenizes to {len} tokens, max_seq_len is {max}")]
    TextTooLong { index: usize, len: usize, max: usize },
    #[error("layer {layer} out of range (model has {num_layers} blocks)")]
    LayerOutOfRange { layer: usize, num_layers: usize },
    #[error("failed to load model: {0}")]
    ModelLoadFailure(String),
    #[error("unsupported precision `{0}`")]
    PrecisionUnsupported(String),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("model holds only {available} blocks, {requested} requested")]
    PrefixTooShort { available: usize, requested: usize },
    #[error("model has no language-model head (truncated prefix)")]
    NoLmHead,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Numeric precision the model computes in.
///
/// Reduced precisions are emulated: weights are rounded to the format when the
/// model is built or loaded and the residual stream is rounded after the
/// embedding lookup and after every block. Arithmetic inside a block is f32.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F16,
    Bf16,
}

impl Precision {
    pub fn bytes(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F16 | Precision::Bf16 => 2,
        }
    }

    #[inline]
    pub fn round(self, x: f32) -> f32 {
        match self {
            Precision::F32 => x,
            Precision::F16 => half::f16::from_f32(x).to_f32(),
            Precision::Bf16 => half::bf16::from_f32(x).to_f32(),
        }
    }

    pub fn round_slice(self, xs: &mut [f32]) {
        if self != Precision::F32 {
            for x in xs {
                *x = self.round(*x);
            }
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F16 => "f16",
            Precision::Bf16 => "bf16",
        })
    }
}

impl FromStr for Precision {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f32" | "float32" => Ok(Precision::F32),
            "f16" | "float16" => Ok(Precision::F16),
            "bf16" | "bfloat16" => Ok(Precision::Bf16),
            other => Err(ModelError::PrecisionUnsupported(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PaddingSide {
    Left,
    #[default]
    Right,
}

fn default_max_seq_len() -> usize {
    512
}
fn default_rope_theta() -> f32 {
    10_000.0
}
fn default_norm_eps() -> f32 {
    1e-5
}

/// Shape and numeric configuration of a decoder-only model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model_id: String,
    /// Number of transformer blocks (N).
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub vocab_size: usize,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default = "default_max_seq_len")]
    pub max_seq_len: usize,
    #[serde(default)]
    pub padding_side: PaddingSide,
    pub num_heads: usize,
    pub num_kv_heads: usize,
    pub ffn_dim: usize,
    #[serde(default)]
    pub tied_embeddings: bool,
    #[serde(default = "default_rope_theta")]
    pub rope_theta: f32,
    #[serde(default = "default_norm_eps")]
    pub norm_eps: f32,
}

impl ModelConfig {
    /// Small Llama-shaped configuration: 2 heads sharing one KV head per pair.
    pub fn toy(model_id: impl Into<String>, num_layers: usize, hidden_dim: usize, vocab_size: usize) -> Self {
        let num_heads = if hidden_dim % 4 == 0 { 4 } else { 1 };
        let num_kv_heads = if num_heads == 4 { 2 } else { 1 };
        Self {
            model_id: model_id.into(),
            num_layers,
            hidden_dim,
            vocab_size,
            precision: Precision::F32,
            max_seq_len: default_max_seq_len(),
            padding_side: PaddingSide::Right,
            num_heads,
            num_kv_heads,
            ffn_dim: hidden_dim * 2,
            tied_embeddings: false,
            rope_theta: default_rope_theta(),
            norm_eps: default_norm_eps(),
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.num_layers < 1 {
            return bad("num_layers must be >= 1".into());
        }
        if self.hidden_dim < 1 {
            return bad("hidden_dim must be >= 1".into());
        }
        if self.vocab_size < 2 {
            return bad("vocab_size must be >= 2".into());
        }
        if self.vocab_size <= FIRST_WORD_ID as usize {
            return bad(format!(
                "vocab_size {} leaves no room for word ids (reserved ids: {})",
                self.vocab_size, FIRST_WORD_ID
            ));
        }
        if self.max_seq_len < 1 {
            return bad("max_seq_len must be >= 1".into());
        }
        if self.num_heads == 0 || self.hidden_dim % self.num_heads != 0 {
            return bad(format!(
                "hidden_dim {} not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            ));
        }
        if self.head_dim() % 2 != 0 {
            return bad(format!("head_dim {} must be even for rotary embeddings", self.head_dim()));
        }
        if self.num_kv_heads == 0 || self.num_heads % self.num_kv_heads != 0 {
            return bad(format!(
                "num_heads {} not divisible by num_kv_heads {}",
                self.num_heads, self.num_kv_heads
            ));
        }
        if self.ffn_dim == 0 {
            return bad("ffn_dim must be >= 1".into());
        }
        Ok(())
    }

    pub fn embed_params(&self) -> u64 {
        (self.vocab_size * self.hidden_dim) as u64
    }

    pub fn block_params(&self) -> u64 {
        let d = self.hidden_dim as u64;
        let kv = (self.num_kv_heads * self.head_dim()) as u64;
        let f = self.ffn_dim as u64;
        // q, o: d*d; k, v: d*kv; gate, up, down: d*f; two norms: d
        2 * d * d + 2 * d * kv + 3 * d * f + 2 * d
    }

    pub fn lm_head_params(&self) -> u64 {
        if self.tied_embeddings {
            0
        } else {
            self.embed_params()
        }
    }
}
