//! Contrastive training loop.
//!
//! Each epoch shuffles the pairs with a seeded generator, walks full batches
//! (a trailing short batch is dropped because the loss needs in-batch
//! negatives), and applies Adam to every parameter. After every epoch the
//! validation captions are embedded and ranked against the validation image
//! store; the checkpoint with the best validation Recall@1 is retained.

use std::collections::BTreeMap;

use crate::encoders::{
    embed_image, embed_speech, embed_speech_node, embed_image_node, Checkpoint, EncoderConfig,
    ModelParams,
};
use crate::error::{Error, Result};
use crate::numcore::{Rng, Tape, Tensor};
use crate::retrieval::{median_rank, rank_of, recall_at_n, EmbeddingStore};
use crate::training::adam::{Adam, AdamConfig};
use crate::training::loss::hinge_loss_node;

/// One aligned (spoken caption, image) training example.
#[derive(Debug, Clone)]
pub struct TrainPair {
    pub caption_id: String,
    pub image_id: String,
    pub features: Vec<Vec<f64>>,
    pub image: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Hinge margin; must be positive.
    pub margin: f64,
    /// Pairs per batch; at least 2 so every item has negatives.
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            margin: 0.2,
            batch_size: 32,
            epochs: 32,
            lr: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.margin <= 0.0 {
            return Err(Error::contract("train config: margin must be positive"));
        }
        if self.batch_size < 2 {
            return Err(Error::contract(
                "train config: batch_size must be at least 2 (in-batch negatives)",
            ));
        }
        if self.epochs == 0 {
            return Err(Error::contract("train config: epochs must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EpochMetrics {
    pub epoch: u32,
    /// Mean per-pair training loss over the epoch.
    pub loss: f64,
    pub recall_at_1: f64,
    pub recall_at_5: f64,
    pub recall_at_10: f64,
    pub median_rank: usize,
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Checkpoint of the epoch with the best validation Recall@1
    /// (earliest epoch on ties).
    pub checkpoint: Checkpoint,
    pub best_epoch: u32,
    pub log: Vec<EpochMetrics>,
}

/// Mean per-pair hinge loss of a prospective batch without updating
/// anything, e.g. to inspect the loss at initialization.
pub fn batch_loss_only(
    pairs: &[&TrainPair],
    params: &ModelParams,
    config: &EncoderConfig,
    margin: f64,
) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let mut speech_nodes = Vec::with_capacity(pairs.len());
    let mut image_nodes = Vec::with_capacity(pairs.len());
    for pair in pairs {
        speech_nodes.push(embed_speech_node(&mut tape, &pair.features, &bound, config)?);
        image_nodes.push(embed_image_node(&mut tape, &pair.image, &bound)?);
    }
    let loss = hinge_loss_node(&mut tape, &speech_nodes, &image_nodes, margin)?;
    Ok(tape.value(loss).item() / pairs.len() as f64)
}

/// Validation retrieval metrics for the given parameters.
pub fn validation_metrics(
    val: &[TrainPair],
    params: &ModelParams,
    config: &EncoderConfig,
) -> Result<(f64, f64, f64, usize)> {
    if val.is_empty() {
        return Err(Error::degenerate("validation split is empty"));
    }
    let mut image_entries = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for pair in val {
        if seen.insert(pair.image_id.clone()) {
            image_entries.push((pair.image_id.clone(), embed_image(&pair.image, params)?));
        }
    }
    let store = EmbeddingStore::new(image_entries, BTreeMap::new())?;
    let mut ranks = Vec::with_capacity(val.len());
    for pair in val {
        let emb = embed_speech(&pair.features, params, config)?;
        ranks.push(rank_of(&emb, &store, &pair.image_id)?);
    }
    Ok((
        recall_at_n(&ranks, 1)?,
        recall_at_n(&ranks, 5)?,
        recall_at_n(&ranks, 10)?,
        median_rank(&ranks)?,
    ))
}

pub fn train(
    train_pairs: &[TrainPair],
    val_pairs: &[TrainPair],
    encoder_config: &EncoderConfig,
    train_config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_config.validate()?;
    encoder_config.validate()?;
    if train_pairs.len() < train_config.batch_size {
        return Err(Error::contract(format!(
            "training set of {} pairs is smaller than one batch of {}",
            train_pairs.len(),
            train_config.batch_size
        )));
    }
    if val_pairs.is_empty() {
        return Err(Error::degenerate("validation split is empty"));
    }

    let mut params = ModelParams::init(encoder_config, train_config.seed);
    let mut adam = Adam::new(AdamConfig {
        lr: train_config.lr,
        ..AdamConfig::default()
    });
    let shuffle_rng = Rng::new(train_config.seed ^ 0x5851f42d4c957f2d);

    let mut log = Vec::with_capacity(train_config.epochs);
    // (recall@1, median rank, mean loss, epoch, params) of the best epoch.
    let mut best: Option<(f64, usize, f64, u32, ModelParams)> = None;

    for epoch in 1..=train_config.epochs as u32 {
        let mut order: Vec<usize> = (0..train_pairs.len()).collect();
        shuffle_rng.derive(epoch as u64).shuffle(&mut order);

        let n_batches = train_pairs.len() / train_config.batch_size;
        let mut epoch_loss = 0.0;
        let mut pairs_seen = 0usize;
        for b in 0..n_batches {
            let idx = &order[b * train_config.batch_size..(b + 1) * train_config.batch_size];

            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let mut speech_nodes = Vec::with_capacity(idx.len());
            let mut image_nodes = Vec::with_capacity(idx.len());
            for &i in idx {
                let pair = &train_pairs[i];
                speech_nodes.push(embed_speech_node(
                    &mut tape,
                    &pair.features,
                    &bound,
                    encoder_config,
                )?);
                image_nodes.push(embed_image_node(&mut tape, &pair.image, &bound)?);
            }
            let loss_node = hinge_loss_node(
                &mut tape,
                &speech_nodes,
                &image_nodes,
                train_config.margin,
            )?;
            let loss = tape.value(loss_node).item();
            if !loss.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite loss {loss} at epoch {epoch}, batch {b}"
                )));
            }
            epoch_loss += loss;
            pairs_seen += idx.len();

            tape.backward(loss_node)?;
            let grads: Vec<(String, Tensor)> = bound
                .leaves
                .iter()
                .map(|(name, id)| (name.clone(), tape.grad(*id).clone()))
                .collect();
            drop(tape);
            let grad_map: BTreeMap<String, Tensor> = grads.into_iter().collect();
            for (name, tensor) in params.named_tensors_mut() {
                if let Some(g) = grad_map.get(&name) {
                    adam.step(&name, tensor, g)?;
                }
            }
        }

        let (r1, r5, r10, med) = validation_metrics(val_pairs, &params, encoder_config)?;
        let mean_loss = epoch_loss / pairs_seen as f64;
        log.push(EpochMetrics {
            epoch,
            loss: mean_loss,
            recall_at_1: r1,
            recall_at_5: r5,
            recall_at_10: r10,
            median_rank: med,
        });
        // Best validation Recall@1; ties broken by lower median rank, then
        // lower training loss (small validation splits saturate R@1 early).
        let better = match &best {
            None => true,
            Some((br1, bmed, bloss, _, _)) => {
                r1 > *br1
                    || (r1 == *br1 && med < *bmed)
                    || (r1 == *br1 && med == *bmed && mean_loss < *bloss)
            }
        };
        if better {
            best = Some((r1, med, mean_loss, epoch, params.clone()));
        }
    }

    let (_, _, _, best_epoch, best_params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            config: encoder_config.clone(),
            seed: train_config.seed,
            epoch: best_epoch,
            params: best_params,
        },
        best_epoch,
        log,
    })
}
