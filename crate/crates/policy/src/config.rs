use serde::{Deserialize, Serialize};

use crate::error::{PolicyError, Result};

/// Shape of a [`crate::PolicyModel`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Model width `D`.
    pub model_dim: usize,
    /// Width of each body-part encoder output.
    pub part_dim: usize,
    /// Per-joint channels inside each part encoder.
    pub joint_channels: usize,
    /// Residual temporal-mixing layers per part encoder.
    pub encoder_layers: usize,
    /// Decoder blocks `L`.
    pub decoder_layers: usize,
    /// Attention heads `H`; must divide `model_dim`.
    pub heads: usize,
    pub ffn_dim: usize,
    /// Vocabulary size `V`, including the reserved ids.
    pub vocab_size: usize,
    /// Learned prefix slots `P` prepended to the encoder memory.
    pub prefix_len: usize,
    pub max_gen_len: usize,
    pub beam_width: usize,
}

impl ModelConfig {
    /// Desk-scale defaults for a vocabulary of `vocab_size`.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            model_dim: 32,
            part_dim: 16,
            joint_channels: 8,
            encoder_layers: 1,
            decoder_layers: 2,
            heads: 4,
            ffn_dim: 64,
            vocab_size,
            prefix_len: 2,
            max_gen_len: 100,
            beam_width: 4,
        }
    }

    /// The smallest configuration exercised by gradient checks.
    pub fn tiny(vocab_size: usize) -> Self {
        Self {
            model_dim: 8,
            part_dim: 4,
            joint_channels: 2,
            encoder_layers: 1,
            decoder_layers: 1,
            heads: 2,
            ffn_dim: 16,
            vocab_size,
            prefix_len: 2,
            max_gen_len: 20,
            beam_width: 4,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("model_dim", self.model_dim),
            ("part_dim", self.part_dim),
            ("joint_channels", self.joint_channels),
            ("encoder_layers", self.encoder_layers),
            ("decoder_layers", self.decoder_layers),
            ("heads", self.heads),
            ("ffn_dim", self.ffn_dim),
            ("vocab_size", self.vocab_size),
            ("prefix_len", self.prefix_len),
            ("max_gen_len", self.max_gen_len),
            ("beam_width", self.beam_width),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(PolicyError::Config(format!("{name} must be at least 1")));
        }
        if self.model_dim % self.heads != 0 {
            return Err(PolicyError::Config(format!(
                "model_dim {} is not divisible by heads {}",
                self.model_dim, self.heads
            )));
        }
        if self.vocab_size <= signdpo_core::vocab::NUM_SPECIAL {
            return Err(PolicyError::Config(format!(
                "vocab_size {} leaves no content tokens",
                self.vocab_size
            )));
        }
        Ok(())
    }
}
