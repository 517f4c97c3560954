//! GRU recurrence on the autodiff tape.
//!
//! Gates follow the original formulation:
//!   z_t = sigmoid(Wz x_t + Uz h_{t-1} + bz)
//!   r_t = sigmoid(Wr x_t + Ur h_{t-1} + br)
//!   g_t = tanh(Wh x_t + Uh (r_t * h_{t-1}) + bh)
//!   h_t = (1 - z_t) * h_{t-1} + z_t * g_t
//! with a zero initial state. The input-side products for all timesteps are
//! batched into single matmuls before the recurrence.

use crate::encoders::params::{BoundGruDirection, BoundGruLayer};
use crate::error::{Error, Result};
use crate::numcore::{NodeId, Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Run one GRU direction over `inputs` ([T, in_dim]) and return the hidden
/// states stacked in original time order ([T, hidden]).
pub fn gru_direction(
    tape: &mut Tape,
    inputs: NodeId,
    params: &BoundGruDirection,
    direction: Direction,
) -> Result<NodeId> {
    let t_len = tape.value(inputs).rows();
    if t_len == 0 {
        return Err(Error::degenerate("gru: empty input sequence"));
    }
    let hidden = tape.value(params.uz).cols();

    // Input-side projections for every timestep at once.
    let xz_all = tape.matmul(inputs, params.wz)?;
    let xz_all = tape.add_bias(xz_all, params.bz)?;
    let xr_all = tape.matmul(inputs, params.wr)?;
    let xr_all = tape.add_bias(xr_all, params.br)?;
    let xh_all = tape.matmul(inputs, params.wh)?;
    let xh_all = tape.add_bias(xh_all, params.bh)?;

    let mut h = tape.leaf(Tensor::zeros(vec![1, hidden]));
    let mut states: Vec<Option<NodeId>> = vec![None; t_len];
    let order: Vec<usize> = match direction {
        Direction::Forward => (0..t_len).collect(),
        Direction::Backward => (0..t_len).rev().collect(),
    };
    for t in order {
        let xz = tape.slice_rows(xz_all, t, t + 1)?;
        let xr = tape.slice_rows(xr_all, t, t + 1)?;
        let xh = tape.slice_rows(xh_all, t, t + 1)?;

        let hz = tape.matmul(h, params.uz)?;
        let z_pre = tape.add(xz, hz)?;
        let z = tape.sigmoid(z_pre);

        let hr = tape.matmul(h, params.ur)?;
        let r_pre = tape.add(xr, hr)?;
        let r = tape.sigmoid(r_pre);

        let rh = tape.mul(r, h)?;
        let hh = tape.matmul(rh, params.uh)?;
        let g_pre = tape.add(xh, hh)?;
        let g = tape.tanh(g_pre);

        let zg = tape.mul(z, g)?;
        let neg_z = tape.scale(z, -1.0);
        let one_minus_z = tape.add_scalar(neg_z, 1.0);
        let keep = tape.mul(one_minus_z, h)?;
        h = tape.add(keep, zg)?;
        states[t] = Some(h);
    }

    let rows: Vec<NodeId> = states.into_iter().map(|s| s.expect("all steps visited")).collect();
    tape.concat_rows(&rows)
}

/// Bidirectional layer: forward and reversed passes concatenated per
/// timestep, [T, in] -> [T, 2 * hidden].
pub fn bigru_layer(tape: &mut Tape, inputs: NodeId, layer: &BoundGruLayer) -> Result<NodeId> {
    let fwd = gru_direction(tape, inputs, &layer.forward, Direction::Forward)?;
    let bwd = gru_direction(tape, inputs, &layer.backward, Direction::Backward)?;
    tape.concat_cols(&[fwd, bwd])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{grad_check_multi, Rng};

    fn bind_direction(tape: &mut Tape, tensors: &[Tensor]) -> BoundGruDirection {
        let ids: Vec<NodeId> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        BoundGruDirection {
            wz: ids[0],
            wr: ids[1],
            wh: ids[2],
            uz: ids[3],
            ur: ids[4],
            uh: ids[5],
            bz: ids[6],
            br: ids[7],
            bh: ids[8],
        }
    }

    fn random_direction(input_dim: usize, hidden: usize, rng: &mut Rng) -> Vec<Tensor> {
        vec![
            Tensor::uniform(vec![input_dim, hidden], 0.5, rng),
            Tensor::uniform(vec![input_dim, hidden], 0.5, rng),
            Tensor::uniform(vec![input_dim, hidden], 0.5, rng),
            Tensor::uniform(vec![hidden, hidden], 0.5, rng),
            Tensor::uniform(vec![hidden, hidden], 0.5, rng),
            Tensor::uniform(vec![hidden, hidden], 0.5, rng),
            Tensor::zeros(vec![1, hidden]),
            Tensor::zeros(vec![1, hidden]),
            Tensor::zeros(vec![1, hidden]),
        ]
    }

    #[test]
    fn zero_input_zero_bias_gives_zero_states() {
        let mut rng = Rng::new(1);
        let mut tape = Tape::new();
        let tensors = random_direction(3, 4, &mut rng);
        let params = bind_direction(&mut tape, &tensors);
        let x = tape.leaf(Tensor::zeros(vec![5, 3]));
        let out = gru_direction(&mut tape, x, &params, Direction::Forward).unwrap();
        assert!(tape.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn length_one_bidirectional_is_concat_of_single_steps() {
        let mut rng = Rng::new(2);
        let fwd_tensors = random_direction(3, 4, &mut rng);
        let bwd_tensors = random_direction(3, 4, &mut rng);
        let x = Tensor::uniform(vec![1, 3], 1.0, &mut rng);

        let mut tape = Tape::new();
        let layer = BoundGruLayer {
            forward: bind_direction(&mut tape, &fwd_tensors),
            backward: bind_direction(&mut tape, &bwd_tensors),
        };
        let xin = tape.leaf(x.clone());
        let bi = bigru_layer(&mut tape, xin, &layer).unwrap();
        assert_eq!(tape.value(bi).shape(), &[1, 8]);

        // Each half equals running that direction alone on the single frame.
        let mut tape2 = Tape::new();
        let pf = bind_direction(&mut tape2, &fwd_tensors);
        let xf = tape2.leaf(x.clone());
        let f = gru_direction(&mut tape2, xf, &pf, Direction::Forward).unwrap();
        let mut tape3 = Tape::new();
        let pb = bind_direction(&mut tape3, &bwd_tensors);
        let xb = tape3.leaf(x);
        let b = gru_direction(&mut tape3, xb, &pb, Direction::Backward).unwrap();

        assert_eq!(&tape.value(bi).data()[..4], tape2.value(f).data());
        assert_eq!(&tape.value(bi).data()[4..], tape3.value(b).data());
    }

    #[test]
    fn reversed_input_mirrors_forward_pass() {
        let mut rng = Rng::new(3);
        let tensors = random_direction(2, 3, &mut rng);
        let x = Tensor::uniform(vec![4, 2], 1.0, &mut rng);
        let mut rev_rows: Vec<f64> = Vec::new();
        for t in (0..4).rev() {
            rev_rows.extend_from_slice(&x.data()[t * 2..(t + 1) * 2]);
        }
        let x_rev = Tensor::new(vec![4, 2], rev_rows).unwrap();

        let mut tape = Tape::new();
        let p = bind_direction(&mut tape, &tensors);
        let xin = tape.leaf(x);
        let out_bwd = gru_direction(&mut tape, xin, &p, Direction::Backward).unwrap();

        let mut tape2 = Tape::new();
        let p2 = bind_direction(&mut tape2, &tensors);
        let xin2 = tape2.leaf(x_rev);
        let out_fwd = gru_direction(&mut tape2, xin2, &p2, Direction::Forward).unwrap();

        // Backward state at time t equals forward state at reversed index.
        for t in 0..4 {
            for d in 0..3 {
                let a = tape.value(out_bwd).at2(t, d);
                let b = tape2.value(out_fwd).at2(3 - t, d);
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gate_gradients_match_finite_differences() {
        let mut rng = Rng::new(4);
        let mut inputs = random_direction(3, 4, &mut rng);
        // Non-zero biases so their gradients are exercised away from zero.
        for b in &mut inputs[6..9] {
            *b = Tensor::uniform(vec![1, 4], 0.3, &mut rng);
        }
        let x = Tensor::uniform(vec![4, 3], 1.0, &mut rng);
        inputs.push(x);

        let err = grad_check_multi(
            |tape, leaves| {
                let params = BoundGruDirection {
                    wz: leaves[0],
                    wr: leaves[1],
                    wh: leaves[2],
                    uz: leaves[3],
                    ur: leaves[4],
                    uh: leaves[5],
                    bz: leaves[6],
                    br: leaves[7],
                    bh: leaves[8],
                };
                let out = gru_direction(tape, leaves[9], &params, Direction::Forward)?;
                Ok(tape.sum(out))
            },
            &inputs,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-5, "gru gradient error {err}");
    }

    #[test]
    fn empty_sequence_is_degenerate() {
        let mut rng = Rng::new(5);
        let mut tape = Tape::new();
        let tensors = random_direction(2, 2, &mut rng);
        let params = bind_direction(&mut tape, &tensors);
        let x = tape.leaf(Tensor::zeros(vec![0, 2]));
        assert!(matches!(
            gru_direction(&mut tape, x, &params, Direction::Forward),
            Err(Error::Degenerate(_))
        ));
    }
}
