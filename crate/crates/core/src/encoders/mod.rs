//! The dual encoders.
//!
//! Speech side: 1-d convolution over the 39-dim feature sequence, a stack of
//! bidirectional GRU layers, self-attention pooling over time, then L2
//! normalization. Image side: a single bias-free linear layer over
//! precomputed image features, then L2 normalization. Both land in the same
//! unit-sphere embedding space, where cosine similarity is a dot product.

pub mod attention;
pub mod checkpoint;
pub mod config;
pub mod gru;
pub mod params;

use crate::error::{Error, Result};
use crate::numcore::{NodeId, Tape, Tensor};

pub use attention::{attention_pool, attention_weights, AttentionParams};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::EncoderConfig;
pub use gru::{bigru_layer, gru_direction, Direction};
pub use params::{BoundModel, ImageHeadParams, ModelParams, SpeechEncoderParams};

/// Unit-norm vector in the shared embedding space.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<EmbeddingVector> {
        let norm: f64 = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::contract(format!(
                "embedding norm {norm} deviates from 1 by more than 1e-9"
            )));
        }
        Ok(EmbeddingVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

/// Speech encoder forward pass on an existing tape. `features` is the
/// [T, feature_dim] input; returns the [1, embed_dim] unit-norm embedding.
pub fn embed_speech_node(
    tape: &mut Tape,
    features: &[Vec<f64>],
    model: &BoundModel,
    config: &EncoderConfig,
) -> Result<NodeId> {
    if features.is_empty() {
        return Err(Error::degenerate("embed_speech: empty feature sequence"));
    }
    let dim = features[0].len();
    if dim != config.feature_dim {
        return Err(Error::contract(format!(
            "embed_speech: feature dim {} != configured {}",
            dim, config.feature_dim
        )));
    }
    if features.len() < config.min_frames() {
        return Err(Error::degenerate(format!(
            "embed_speech: {} frames shorter than conv kernel {}",
            features.len(),
            config.conv_kernel
        )));
    }
    let flat: Vec<f64> = features.iter().flatten().copied().collect();
    let x = tape.leaf(Tensor::new(vec![features.len(), dim], flat)?);

    let conv = tape.conv1d(x, model.conv_w, config.conv_stride)?;
    let mut h = tape.add_bias(conv, model.conv_b)?;
    for layer in &model.layers {
        h = bigru_layer(tape, h, layer)?;
    }
    let attn = AttentionParams {
        w1: model.attn_w1,
        b1: model.attn_b1,
        w2: model.attn_w2,
        b2: model.attn_b2,
    };
    let pooled = attention_pool(tape, h, &attn)?;
    tape.l2_normalize(pooled)
}

/// Image head forward pass on an existing tape: [1, image_feature_dim] ->
/// [1, embed_dim], unit norm.
pub fn embed_image_node(
    tape: &mut Tape,
    image_features: &[f64],
    model: &BoundModel,
) -> Result<NodeId> {
    let weight_rows = tape.value(model.img_w).rows();
    if image_features.len() != weight_rows {
        return Err(Error::contract(format!(
            "embed_image: feature dim {} != weight rows {}",
            image_features.len(),
            weight_rows
        )));
    }
    let x = tape.leaf(Tensor::new(vec![1, image_features.len()], image_features.to_vec())?);
    let projected = tape.matmul(x, model.img_w)?;
    tape.l2_normalize(projected)
}

/// Standalone speech embedding (fresh private tape).
pub fn embed_speech(
    features: &[Vec<f64>],
    params: &ModelParams,
    config: &EncoderConfig,
) -> Result<EmbeddingVector> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let node = embed_speech_node(&mut tape, features, &bound, config)?;
    EmbeddingVector::new(tape.value(node).data().to_vec())
}

/// Standalone image embedding (fresh private tape).
pub fn embed_image(image_features: &[f64], params: &ModelParams) -> Result<EmbeddingVector> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let node = embed_image_node(&mut tape, image_features, &bound)?;
    EmbeddingVector::new(tape.value(node).data().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{grad_check, Rng};

    fn tiny_config() -> EncoderConfig {
        EncoderConfig {
            feature_dim: 39,
            conv_channels: 6,
            conv_kernel: 3,
            conv_stride: 2,
            gru_layers: 4,
            gru_hidden: 4,
            attn_hidden: 3,
            image_feature_dim: 5,
        }
    }

    fn random_features(t: usize, dim: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
        (0..t)
            .map(|_| (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect()
    }

    #[test]
    fn speech_embedding_is_unit_norm() {
        let config = tiny_config();
        let params = ModelParams::init(&config, 1);
        let mut rng = Rng::new(2);
        for _ in 0..5 {
            let t = config.conv_kernel + rng.below(20);
            let feats = random_features(t, 39, &mut rng);
            let emb = embed_speech(&feats, &params, &config).unwrap();
            let norm: f64 = emb.values().iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn desk_profile_embeds_in_64_dims() {
        let config = EncoderConfig::desk();
        let params = ModelParams::init(&config, 3);
        let mut rng = Rng::new(4);
        let feats = random_features(12, 39, &mut rng);
        let emb = embed_speech(&feats, &params, &config).unwrap();
        assert_eq!(emb.dim(), 64);
    }

    #[test]
    fn embedding_is_deterministic() {
        let config = tiny_config();
        let mut rng = Rng::new(5);
        let feats = random_features(9, 39, &mut rng);
        let a = embed_speech(&feats, &ModelParams::init(&config, 7), &config).unwrap();
        let b = embed_speech(&feats, &ModelParams::init(&config, 7), &config).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn too_short_sequence_is_degenerate() {
        let config = tiny_config();
        let params = ModelParams::init(&config, 1);
        let mut rng = Rng::new(6);
        let feats = random_features(config.conv_kernel - 1, 39, &mut rng);
        assert!(matches!(
            embed_speech(&feats, &params, &config),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn image_identity_weight_normalizes() {
        let config = EncoderConfig {
            image_feature_dim: 2,
            gru_hidden: 1,
            ..tiny_config()
        };
        let mut params = ModelParams::init(&config, 1);
        params.image.weight = Tensor::matrix(2, 2, &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let emb = embed_image(&[3.0, 4.0], &params).unwrap();
        assert!((emb.values()[0] - 0.6).abs() < 1e-12);
        assert!((emb.values()[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn image_embedding_is_scale_invariant() {
        let config = tiny_config();
        let params = ModelParams::init(&config, 8);
        let x = vec![0.3, -1.2, 0.7, 0.1, 2.0];
        let x5: Vec<f64> = x.iter().map(|v| v * 5.0).collect();
        let a = embed_image(&x, &params).unwrap();
        let b = embed_image(&x5, &params).unwrap();
        for (u, v) in a.values().iter().zip(b.values()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn image_head_gradient_checks() {
        let mut rng = Rng::new(9);
        let x: Vec<f64> = (0..8).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let target: Vec<f64> = (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let weight = Tensor::uniform(vec![8, 3], 0.5, &mut rng);
        // Scalar function of the weight: cosine of embedded x with a target.
        let err = grad_check(
            |tape, w| {
                let xin = tape.leaf(Tensor::new(vec![1, 8], x.clone())?);
                let proj = tape.matmul(xin, w)?;
                let emb = tape.l2_normalize(proj)?;
                let t = tape.leaf(Tensor::new(vec![1, 3], target.clone())?);
                tape.cosine_similarity(emb, t)
            },
            &weight,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-5, "image head gradient error {err}");
    }

    #[test]
    fn zero_projection_is_degenerate() {
        let config = tiny_config();
        let mut params = ModelParams::init(&config, 1);
        params.image.weight = Tensor::zeros(vec![5, 8]);
        assert!(matches!(
            embed_image(&[1.0, 2.0, 3.0, 4.0, 5.0], &params),
            Err(Error::Degenerate(_))
        ));
    }
}
