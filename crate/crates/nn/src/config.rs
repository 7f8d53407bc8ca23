use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};

/// Shape of a transformer stack (decoder or encoder).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub max_seq_len: usize,
    pub dropout: f64,
}

impl ModelConfig {
    /// Decoder default: 4 layers, 4 heads, E=128.
    pub fn decoder(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            embed_dim: 128,
            layers: 4,
            heads: 4,
            ff_dim: 512,
            max_seq_len: 160,
            dropout: 0.1,
        }
    }

    /// Encoder default: 2 layers, 4 heads, E=128 (same E as the decoder).
    pub fn encoder(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            embed_dim: 128,
            layers: 2,
            heads: 4,
            ff_dim: 512,
            max_seq_len: 256,
            dropout: 0.1,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.embed_dim == 0 || self.layers == 0 || self.heads == 0 {
            return Err(NnError::InvalidConfig(
                "vocab_size, embed_dim, layers and heads must be positive".into(),
            ));
        }
        if self.embed_dim % self.heads != 0 {
            return Err(NnError::InvalidConfig(format!(
                "embed_dim {} is not divisible by heads {}",
                self.embed_dim, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NnError::InvalidConfig(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.max_seq_len == 0 || self.ff_dim == 0 {
            return Err(NnError::InvalidConfig(
                "max_seq_len and ff_dim must be positive".into(),
            ));
        }
        Ok(())
    }
}
