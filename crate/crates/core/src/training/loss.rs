//! Bidirectional batch hinge ranking loss.
//!
//! For aligned pairs (s_i, i_i) the loss sums, over every ordered pair
//! i != j, the caption-anchored and image-anchored hinge terms:
//!
//!   L = sum_i sum_{j != i} [ max(0, margin - cos(s_i, i_i) + cos(s_i, i_j))
//!                          + max(0, margin - cos(s_i, i_i) + cos(s_j, i_i)) ]
//!
//! Every other in-batch item serves as a negative, in both retrieval
//! directions. Embeddings are unit-norm, so the full cosine matrix is a
//! single matrix product.

use crate::encoders::EmbeddingVector;
use crate::error::{Error, Result};
use crate::numcore::{NodeId, Tape, Tensor};

/// Build the batch hinge loss on the tape from per-item embedding nodes
/// (each [1, d], already unit-norm). Returns the scalar loss node.
pub fn hinge_loss_node(
    tape: &mut Tape,
    speech: &[NodeId],
    images: &[NodeId],
    margin: f64,
) -> Result<NodeId> {
    if margin <= 0.0 {
        return Err(Error::contract(format!("hinge loss: margin {margin} must be positive")));
    }
    let n = speech.len();
    if n != images.len() {
        return Err(Error::contract("hinge loss: speech/image count mismatch"));
    }
    if n < 2 {
        return Err(Error::contract(
            "hinge loss: need at least 2 pairs for in-batch negatives",
        ));
    }

    let s_mat = tape.concat_rows(speech)?; // [n, d]
    let i_mat = tape.concat_rows(images)?; // [n, d]
    let i_t = tape.transpose(i_mat);
    let sims = tape.matmul(s_mat, i_t)?; // sims[i][j] = cos(s_i, i_j)

    // Matched similarities broadcast along rows: D[i][j] = cos(s_i, i_i).
    let matched = tape.diag(sims)?; // [n, 1]
    let ones = tape.leaf(Tensor::new(vec![1, n], vec![1.0; n])?);
    let matched_rows = tape.matmul(matched, ones)?; // [n, n]
    let neg_matched = tape.scale(matched_rows, -1.0);

    // Mask keeping only the off-diagonal terms.
    let mut mask = vec![1.0; n * n];
    for i in 0..n {
        mask[i * n + i] = 0.0;
    }
    let mask = tape.leaf(Tensor::new(vec![n, n], mask)?);

    // Caption-anchored: margin - cos(s_i, i_i) + cos(s_i, i_j).
    let c2i = tape.add(sims, neg_matched)?;
    let c2i = tape.add_scalar(c2i, margin);
    let c2i = tape.mul(c2i, mask)?;
    let c2i = tape.max_with_scalar(c2i, 0.0);
    let c2i_sum = tape.sum(c2i);

    // Image-anchored: margin - cos(s_i, i_i) + cos(s_j, i_i).
    let sims_t = tape.transpose(sims);
    let i2c = tape.add(sims_t, neg_matched)?;
    let i2c = tape.add_scalar(i2c, margin);
    let i2c = tape.mul(i2c, mask)?;
    let i2c = tape.max_with_scalar(i2c, 0.0);
    let i2c_sum = tape.sum(i2c);

    tape.add(c2i_sum, i2c_sum)
}

/// Evaluate the loss on plain embedding values.
pub fn batch_hinge_loss(
    speech: &[EmbeddingVector],
    images: &[EmbeddingVector],
    margin: f64,
) -> Result<f64> {
    let mut tape = Tape::new();
    let s: Vec<NodeId> = speech
        .iter()
        .map(|e| tape.leaf(Tensor::new(vec![1, e.dim()], e.values().to_vec()).unwrap()))
        .collect();
    let i: Vec<NodeId> = images
        .iter()
        .map(|e| tape.leaf(Tensor::new(vec![1, e.dim()], e.values().to_vec()).unwrap()))
        .collect();
    let loss = hinge_loss_node(&mut tape, &s, &i, margin)?;
    Ok(tape.value(loss).item())
}
