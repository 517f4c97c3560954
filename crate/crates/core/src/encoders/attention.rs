//! Self-attention pooling over time.
//!
//! A one-hidden-layer scorer assigns each timestep a scalar score; softmax
//! over time turns the scores into weights and the pooled vector is the
//! weighted sum of states. Single head, additive scoring.

use crate::error::{Error, Result};
use crate::numcore::{NodeId, Tape};

pub struct AttentionParams {
    pub w1: NodeId,
    pub b1: NodeId,
    pub w2: NodeId,
    pub b2: NodeId,
}

/// Pool `states` ([T, d]) into a single [1, d] vector.
pub fn attention_pool(tape: &mut Tape, states: NodeId, params: &AttentionParams) -> Result<NodeId> {
    if tape.value(states).rows() == 0 {
        return Err(Error::degenerate("attention_pool: empty sequence"));
    }
    let hidden = tape.matmul(states, params.w1)?;
    let hidden = tape.add_bias(hidden, params.b1)?;
    let hidden = tape.tanh(hidden);
    let scores = tape.matmul(hidden, params.w2)?;
    let scores = tape.add_bias(scores, params.b2)?; // [T, 1]
    let scores_row = tape.transpose(scores); // [1, T]
    let weights = tape.softmax(scores_row); // softmax over time
    tape.matmul(weights, states) // [1, d]
}

/// The attention weights themselves, for inspection/tests.
pub fn attention_weights(
    tape: &mut Tape,
    states: NodeId,
    params: &AttentionParams,
) -> Result<NodeId> {
    let hidden = tape.matmul(states, params.w1)?;
    let hidden = tape.add_bias(hidden, params.b1)?;
    let hidden = tape.tanh(hidden);
    let scores = tape.matmul(hidden, params.w2)?;
    let scores = tape.add_bias(scores, params.b2)?;
    let scores_row = tape.transpose(scores);
    Ok(tape.softmax(scores_row))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{Rng, Tensor};

    fn random_params(tape: &mut Tape, d: usize, a: usize, rng: &mut Rng) -> AttentionParams {
        AttentionParams {
            w1: tape.leaf(Tensor::uniform(vec![d, a], 0.5, rng)),
            b1: tape.leaf(Tensor::uniform(vec![1, a], 0.5, rng)),
            w2: tape.leaf(Tensor::uniform(vec![a, 1], 0.5, rng)),
            b2: tape.leaf(Tensor::uniform(vec![1, 1], 0.5, rng)),
        }
    }

    #[test]
    fn single_timestep_passes_through() {
        let mut rng = Rng::new(1);
        let mut tape = Tape::new();
        let params = random_params(&mut tape, 5, 3, &mut rng);
        let state = Tensor::uniform(vec![1, 5], 1.0, &mut rng);
        let s = tape.leaf(state.clone());
        let pooled = attention_pool(&mut tape, s, &params).unwrap();
        for (a, b) in tape.value(pooled).data().iter().zip(state.data()) {
            assert!((a - b).abs() < 1e-15);
        }
        let w = attention_weights(&mut tape, s, &params).unwrap();
        assert!((tape.value(w).item() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn equal_scores_give_time_mean() {
        // Zero scorer weights -> identical scores -> uniform weights.
        let mut rng = Rng::new(2);
        let mut tape = Tape::new();
        let params = AttentionParams {
            w1: tape.leaf(Tensor::zeros(vec![5, 3])),
            b1: tape.leaf(Tensor::zeros(vec![1, 3])),
            w2: tape.leaf(Tensor::zeros(vec![3, 1])),
            b2: tape.leaf(Tensor::zeros(vec![1, 1])),
        };
        let states = Tensor::uniform(vec![4, 5], 1.0, &mut rng);
        let s = tape.leaf(states.clone());
        let pooled = attention_pool(&mut tape, s, &params).unwrap();
        for d in 0..5 {
            let mean: f64 = (0..4).map(|t| states.at2(t, d)).sum::<f64>() / 4.0;
            assert!((tape.value(pooled).at2(0, d) - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_sum_to_one() {
        let mut rng = Rng::new(3);
        for trial in 0..10 {
            let mut tape = Tape::new();
            let params = random_params(&mut tape, 6, 4, &mut rng);
            let t_len = 1 + rng.below(9);
            let states = tape.leaf(Tensor::uniform(vec![t_len, 6], 2.0, &mut rng));
            let w = attention_weights(&mut tape, states, &params).unwrap();
            let total: f64 = tape.value(w).data().iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "trial {trial}: sum {total}");
        }
    }
}
