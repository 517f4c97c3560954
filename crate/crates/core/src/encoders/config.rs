//! Encoder architecture configuration and the two built-in profiles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture of the dual encoder.
///
/// The `desk` profile is sized so the whole test suite trains in seconds;
/// the `paper` profile carries the full-scale dimensions (1024 GRU units per
/// direction concatenated to a 2048-dim embedding). The embedding dimension
/// is always twice the GRU hidden size: attention pooling preserves the
/// concatenated bidirectional state width and no further projection is
/// applied.
///
/// The convolution hyperparameters and the attention scorer size are not
/// fixed by the architecture description this follows; the values here are
/// explicit choices, identical in both profiles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Acoustic feature dimension (39 for the MFCC front end).
    pub feature_dim: usize,
    pub conv_channels: usize,
    pub conv_kernel: usize,
    pub conv_stride: usize,
    /// Number of stacked bidirectional GRU layers (4 by default).
    pub gru_layers: usize,
    /// Hidden size per direction.
    pub gru_hidden: usize,
    /// Hidden size of the attention scorer.
    pub attn_hidden: usize,
    /// Dimension of the precomputed image feature vectors.
    pub image_feature_dim: usize,
}

impl EncoderConfig {
    pub fn desk() -> EncoderConfig {
        EncoderConfig {
            feature_dim: 39,
            conv_channels: 64,
            conv_kernel: 6,
            conv_stride: 2,
            gru_layers: 4,
            gru_hidden: 32,
            attn_hidden: 32,
            image_feature_dim: 16,
        }
    }

    pub fn paper() -> EncoderConfig {
        EncoderConfig {
            feature_dim: 39,
            conv_channels: 64,
            conv_kernel: 6,
            conv_stride: 2,
            gru_layers: 4,
            gru_hidden: 1024,
            attn_hidden: 128,
            image_feature_dim: 2048,
        }
    }

    pub fn from_profile(name: &str) -> Result<EncoderConfig> {
        match name {
            "desk" => Ok(EncoderConfig::desk()),
            "paper" => Ok(EncoderConfig::paper()),
            other => Err(Error::contract(format!(
                "unknown profile '{other}' (expected 'desk' or 'paper')"
            ))),
        }
    }

    /// Dimension of the shared embedding space.
    pub fn embed_dim(&self) -> usize {
        2 * self.gru_hidden
    }

    /// Minimum number of feature frames the conv layer accepts.
    pub fn min_frames(&self) -> usize {
        self.conv_kernel
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("feature_dim", self.feature_dim),
            ("conv_channels", self.conv_channels),
            ("conv_kernel", self.conv_kernel),
            ("conv_stride", self.conv_stride),
            ("gru_layers", self.gru_layers),
            ("gru_hidden", self.gru_hidden),
            ("attn_hidden", self.attn_hidden),
            ("image_feature_dim", self.image_feature_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::contract(format!("encoder config: {name} must be positive")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_embeds_in_64_dims() {
        assert_eq!(EncoderConfig::desk().embed_dim(), 64);
    }

    #[test]
    fn paper_embeds_in_2048_dims() {
        assert_eq!(EncoderConfig::paper().embed_dim(), 2048);
    }

    #[test]
    fn unknown_profile_rejected() {
        assert!(EncoderConfig::from_profile("tiny").is_err());
    }
}
