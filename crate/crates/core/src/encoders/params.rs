//! Parameter containers for both encoders, plus tape binding and the
//! flat named-tensor view used by the optimizer and checkpoints.
//!
//! Weights are initialized uniformly in ±1/sqrt(fan_in) from a seeded
//! generator; biases start at zero.

use std::collections::BTreeMap;

use crate::encoders::config::EncoderConfig;
use crate::error::{Error, Result};
use crate::numcore::{NodeId, Rng, Tape, Tensor};

/// One GRU direction: update gate z, reset gate r, candidate h.
#[derive(Debug, Clone)]
pub struct GruDirection {
    pub wz: Tensor,
    pub wr: Tensor,
    pub wh: Tensor,
    pub uz: Tensor,
    pub ur: Tensor,
    pub uh: Tensor,
    pub bz: Tensor,
    pub br: Tensor,
    pub bh: Tensor,
}

impl GruDirection {
    fn init(input_dim: usize, hidden: usize, rng: &mut Rng) -> GruDirection {
        let wl = 1.0 / (input_dim as f64).sqrt();
        let ul = 1.0 / (hidden as f64).sqrt();
        GruDirection {
            wz: Tensor::uniform(vec![input_dim, hidden], wl, rng),
            wr: Tensor::uniform(vec![input_dim, hidden], wl, rng),
            wh: Tensor::uniform(vec![input_dim, hidden], wl, rng),
            uz: Tensor::uniform(vec![hidden, hidden], ul, rng),
            ur: Tensor::uniform(vec![hidden, hidden], ul, rng),
            uh: Tensor::uniform(vec![hidden, hidden], ul, rng),
            bz: Tensor::zeros(vec![1, hidden]),
            br: Tensor::zeros(vec![1, hidden]),
            bh: Tensor::zeros(vec![1, hidden]),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GruLayer {
    pub forward: GruDirection,
    pub backward: GruDirection,
}

#[derive(Debug, Clone)]
pub struct SpeechEncoderParams {
    pub conv_w: Tensor,
    pub conv_b: Tensor,
    pub layers: Vec<GruLayer>,
    pub attn_w1: Tensor,
    pub attn_b1: Tensor,
    pub attn_w2: Tensor,
    pub attn_b2: Tensor,
}

impl SpeechEncoderParams {
    pub fn init(config: &EncoderConfig, rng: &mut Rng) -> SpeechEncoderParams {
        let conv_fan_in = config.feature_dim * config.conv_kernel;
        let mut layers = Vec::with_capacity(config.gru_layers);
        for l in 0..config.gru_layers {
            let input_dim = if l == 0 {
                config.conv_channels
            } else {
                 2 * config.gru_hidden
            };
            layers.push(GruLayer {
                forward: GruDirection::init(input_dim, config.gru_hidden, rng),
                backward: GruDirection::init(input_dim, config.gru_hidden, rng),
            });
        }
        let d = 2 * config.gru_hidden;
        SpeechEncoderParams {
            conv_w: Tensor::uniform(
                vec![config.conv_channels, config.feature_dim, config.conv_kernel],
                1.0 / (conv_fan_in as f64).sqrt(),
                rng,
            ),
            conv_b: Tensor::zeros(vec![1, config.conv_channels]),
            layers,
            attn_w1: Tensor::uniform(
                vec![d, config.attn_hidden],
                1.0 / (d as f64).sqrt(),
                rng,
            ),
            attn_b1: Tensor::zeros(vec![1, config.attn_hidden]),
            attn_w2: Tensor::uniform(
                vec![config.attn_hidden, 1],
                1.0 / (config.attn_hidden as f64).sqrt(),
                rng,
            ),
            attn_b2: Tensor::zeros(vec![1, 1]),
        }
    }
}

/// Linear map from image feature space into the shared embedding space.
/// No bias, matching a bare linear layer before L2 normalization.
#[derive(Debug, Clone)]
pub struct ImageHeadParams {
    pub weight: Tensor,
}

impl ImageHeadParams {
    pub fn init(config: &EncoderConfig, rng: &mut Rng) -> ImageHeadParams {
        ImageHeadParams {
            weight: Tensor::uniform(
                vec![config.image_feature_dim, config.embed_dim()],
                1.0 / (config.image_feature_dim as f64).sqrt(),
                rng,
            ),
        }
    }
}

/// Full trainable model.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub speech: SpeechEncoderParams,
    pub image: ImageHeadParams,
}

impl ModelParams {
    pub fn init(config: &EncoderConfig, seed: u64) -> ModelParams {
        let mut rng = Rng::new(seed);
        ModelParams {
            speech: SpeechEncoderParams::init(config, &mut rng),
            image: ImageHeadParams::init(config, &mut rng),
        }
    }

    /// Deterministically ordered (name, tensor) view of every parameter.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("conv.w".into(), &self.speech.conv_w),
            ("conv.b".into(), &self.speech.conv_b),
        ];
        for (l, layer) in self.speech.layers.iter().enumerate() {
            for (dir, p) in [("f", &layer.forward), ("b", &layer.backward)] {
                out.push((format!("gru{l}.{dir}.wz"), &p.wz));
                out.push((format!("gru{l}.{dir}.wr"), &p.wr));
                out.push((format!("gru{l}.{dir}.wh"), &p.wh));
                out.push((format!("gru{l}.{dir}.uz"), &p.uz));
                out.push((format!("gru{l}.{dir}.ur"), &p.ur));
                out.push((format!("gru{l}.{dir}.uh"), &p.uh));
                out.push((format!("gru{l}.{dir}.bz"), &p.bz));
                out.push((format!("gru{l}.{dir}.br"), &p.br));
                out.push((format!("gru{l}.{dir}.bh"), &p.bh));
            }
        }
        out.push(("attn.w1".into(), &self.speech.attn_w1));
        out.push(("attn.b1".into(), &self.speech.attn_b1));
        out.push(("attn.w2".into(), &self.speech.attn_w2));
        out.push(("attn.b2".into(), &self.speech.attn_b2));
        out.push(("img.w".into(), &self.image.weight));
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = vec![
            ("conv.w".into(), &mut self.speech.conv_w),
            ("conv.b".into(), &mut self.speech.conv_b),
        ];
        for (l, layer) in self.speech.layers.iter_mut().enumerate() {
            for (dir, p) in [("f", &mut layer.forward), ("b", &mut layer.backward)] {
                out.push((format!("gru{l}.{dir}.wz"), &mut p.wz));
                out.push((format!("gru{l}.{dir}.wr"), &mut p.wr));
                out.push((format!("gru{l}.{dir}.wh"), &mut p.wh));
                out.push((format!("gru{l}.{dir}.uz"), &mut p.uz));
                out.push((format!("gru{l}.{dir}.ur"), &mut p.ur));
                out.push((format!("gru{l}.{dir}.uh"), &mut p.uh));
                out.push((format!("gru{l}.{dir}.bz"), &mut p.bz));
                out.push((format!("gru{l}.{dir}.br"), &mut p.br));
                out.push((format!("gru{l}.{dir}.bh"), &mut p.bh));
            }
        }
        out.push(("attn.w1".into(), &mut self.speech.attn_w1));
        out.push(("attn.b1".into(), &mut self.speech.attn_b1));
        out.push(("attn.w2".into(), &mut self.speech.attn_w2));
        out.push(("attn.b2".into(), &mut self.speech.attn_b2));
        out.push(("img.w".into(), &mut self.image.weight));
        out
    }

    /// Rebuild from a name -> tensor map, validating shapes against `config`.
    pub fn from_named(config: &EncoderConfig, map: &BTreeMap<String, Tensor>) -> Result<ModelParams> {
        let mut template = ModelParams::init(config, 0);
        for (name, slot) in template.named_tensors_mut() {
            let t = map
                .get(&name)
                .ok_or_else(|| Error::ingest(format!("checkpoint missing tensor '{name}'")))?;
            if t.shape() != slot.shape() {
                return Err(Error::ingest(format!(
                    "checkpoint tensor '{name}' has shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t.clone();
        }
        Ok(template)
    }
}

/// Tape-bound view of one GRU direction.
#[derive(Debug, Clone, Copy)]
pub struct BoundGruDirection {
    pub wz: NodeId,
    pub wr: NodeId,
    pub wh: NodeId,
    pub uz: NodeId,
    pub ur: NodeId,
    pub uh: NodeId,
    pub bz: NodeId,
    pub br: NodeId,
    pub bh: NodeId,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundGruLayer {
    pub forward: BoundGruDirection,
    pub backward: BoundGruDirection,
}

#[derive(Debug, Clone)]
pub struct BoundModel {
    pub conv_w: NodeId,
    pub conv_b: NodeId,
    pub layers: Vec<BoundGruLayer>,
    pub attn_w1: NodeId,
    pub attn_b1: NodeId,
    pub attn_w2: NodeId,
    pub attn_b2: NodeId,
    pub img_w: NodeId,
    /// Leaf ids in `named_tensors` order, for reading gradients back out.
    pub leaves: Vec<(String, NodeId)>,
}

impl ModelParams {
    /// Insert every parameter as a leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        let mut leaves = Vec::new();
        let mut bind = |name: String, t: &Tensor, tape: &mut Tape| -> NodeId {
            let id = tape.leaf(t.clone());
            leaves.push((name, id));
            id
        };
        let conv_w = bind("conv.w".into(), &self.speech.conv_w, tape);
        let conv_b = bind("conv.b".into(), &self.speech.conv_b, tape);
        let mut layers = Vec::with_capacity(self.speech.layers.len());
        for (l, layer) in self.speech.layers.iter().enumerate() {
            let mut dir = |tag: &str, p: &GruDirection, tape: &mut Tape| BoundGruDirection {
                wz: bind(format!("gru{l}.{tag}.wz"), &p.wz, tape),
                wr: bind(format!("gru{l}.{tag}.wr"), &p.wr, tape),
                wh: bind(format!("gru{l}.{tag}.wh"), &p.wh, tape),
                uz: bind(format!("gru{l}.{tag}.uz"), &p.uz, tape),
                ur: bind(format!("gru{l}.{tag}.ur"), &p.ur, tape),
                uh: bind(format!("gru{l}.{tag}.uh"), &p.uh, tape),
                bz: bind(format!("gru{l}.{tag}.bz"), &p.bz, tape),
                br: bind(format!("gru{l}.{tag}.br"), &p.br, tape),
                bh: bind(format!("gru{l}.{tag}.bh"), &p.bh, tape),
            };
            let forward = dir("f", &layer.forward, tape);
            let backward = dir("b", &layer.backward, tape);
            layers.push(BoundGruLayer { forward, backward });
        }
        let attn_w1 = bind("attn.w1".into(), &self.speech.attn_w1, tape);
        let attn_b1 = bind("attn.b1".into(), &self.speech.attn_b1, tape);
        let attn_w2 = bind("attn.w2".into(), &self.speech.attn_w2, tape);
        let attn_b2 = bind("attn.b2".into(), &self.speech.attn_b2, tape);
        let img_w = bind("img.w".into(), &self.image.weight, tape);
        BoundModel {
            conv_w,
            conv_b,
            layers,
            attn_w1,
            attn_b1,
            attn_w2,
            attn_b2,
            img_w,
            leaves,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_under_seed() {
        let config = EncoderConfig::desk();
        let a = ModelParams::init(&config, 42);
        let b = ModelParams::init(&config, 42);
        for ((_, ta), (_, tb)) in a.named_tensors().iter().zip(b.named_tensors()) {
            assert_eq!(ta.data(), tb.data());
        }
    }

    #[test]
    fn named_roundtrip() {
        let config = EncoderConfig::desk();
        let a = ModelParams::init(&config, 7);
        let map: BTreeMap<String, Tensor> = a
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        let b = ModelParams::from_named(&config, &map).unwrap();
        for ((na, ta), (nb, tb)) in a.named_tensors().iter().zip(b.named_tensors()) {
            assert_eq!(*na, nb);
            assert_eq!(ta.data(), tb.data());
        }
    }

    #[test]
    fn layer_input_dims_follow_stacking() {
        let config = EncoderConfig::desk();
        let p = SpeechEncoderParams::init(&config, &mut Rng::new(0));
        assert_eq!(p.layers.len(), 4);
        assert_eq!(p.layers[0].forward.wz.shape(), &[64, 32]);
        assert_eq!(p.layers[1].forward.wz.shape(), &[64, 32]);
        assert_eq!(p.layers[1].forward.uz.shape(), &[32, 32]);
    }
}
