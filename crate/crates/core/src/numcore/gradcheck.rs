//! Central finite-difference gradient checking.
//!
//! The checker rebuilds the computation from scratch for every probe, so it
//! is independent of the backward pass it verifies.

use crate::error::{Error, Result};
use crate::numcore::tape::{NodeId, Tape};
use crate::numcore::tensor::Tensor;

/// Compare the analytic gradient of a scalar-valued function against central
/// finite differences. Returns the maximum over coordinates of
/// |analytic - numeric| / max(1, |analytic|).
///
/// `build` must construct the function on the given tape from the single
/// input leaf and return the scalar output node.
pub fn grad_check<F>(build: F, input: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId>,
{
    grad_check_multi(
        |tape, leaves| build(tape, leaves[0]),
        std::slice::from_ref(input),
        step,
    )
}

/// Multi-input variant of [`grad_check`]; the error is maximized over every
/// coordinate of every input.
pub fn grad_check_multi<F>(build: F, inputs: &[Tensor], step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    if !(1e-8..1e-2).contains(&step) {
        return Err(Error::contract(format!(
            "grad_check: step {step} outside (1e-8, 1e-2)"
        )));
    }

    let eval = |points: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let leaves: Vec<NodeId> = points.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = build(&mut tape, &leaves)?;
        if tape.value(out).len() != 1 {
            return Err(Error::contract("grad_check: function must be scalar-valued"));
        }
        let v = tape.value(out).item();
        if !v.is_finite() {
            return Err(Error::numeric("grad_check: non-finite function value"));
        }
        Ok(v)
    };

    // Analytic gradients via one backward pass.
    let mut tape = Tape::new();
    let leaves: Vec<NodeId> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &leaves)?;
    if tape.value(out).len() != 1 {
        return Err(Error::contract("grad_check: function must be scalar-valued"));
    }
    tape.backward(out)?;
    let analytic: Vec<Tensor> = leaves.iter().map(|&l| tape.grad(l).clone()).collect();

    let mut worst = 0.0f64;
    let mut probe: Vec<Tensor> = inputs.to_vec();
    for (ti, input) in inputs.iter().enumerate() {
        for ci in 0..input.len() {
            let x0 = input.data()[ci];
            probe[ti].data_mut()[ci] = x0 + step;
            let fp = eval(&probe)?;
            probe[ti].data_mut()[ci] = x0 - step;
            let fm = eval(&probe)?;
            probe[ti].data_mut()[ci] = x0;

            let numeric = (fp - fm) / (2.0 * step);
            if !numeric.is_finite() {
                return Err(Error::numeric("grad_check: non-finite finite difference"));
            }
            let a = analytic[ti].data()[ci];
            let err = (a - numeric).abs() / a.abs().max(1.0);
            if err > worst {
                worst = err;
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::rng::Rng;

    #[test]
    fn quadratic_is_exact_up_to_rounding() {
        let x = Tensor::vector(&[1.0, 2.0, 3.0]);
        let err = grad_check(
            |tape, leaf| {
                let sq = tape.mul(leaf, leaf)?;
                Ok(tape.sum(sq))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "err = {err}");

        // And the analytic gradient itself is [2, 4, 6].
        let mut tape = Tape::new();
        let leaf = tape.leaf(x);
        let sq = tape.mul(leaf, leaf).unwrap();
        let s = tape.sum(sq);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(leaf).data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn l2_normalize_dot_composition() {
        let mut rng = Rng::new(0);
        let x = Tensor::uniform(vec![8], 1.0, &mut rng);
        let w: Vec<f64> = (0..8).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let err = grad_check(
            |tape, leaf| {
                let normed = tape.l2_normalize(leaf)?;
                let wvec = tape.leaf(Tensor::vector(&w));
                let prod = tape.mul(normed, wvec)?;
                Ok(tape.sum(prod))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-5, "err = {err}");
    }

    #[test]
    fn step_outside_range_rejected() {
        let x = Tensor::vector(&[1.0]);
        let r = grad_check(|tape, leaf| Ok(tape.sum(leaf)), &x, 0.5);
        assert!(matches!(r, Err(crate::error::Error::Contract(_))));
    }
}
