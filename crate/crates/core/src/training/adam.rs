//! Adam with bias correction.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numcore::Tensor;

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m: Tensor,
    v: Tensor,
    t: u64,
}

/// Optimizer state keyed by parameter name.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    state: BTreeMap<String, Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Adam {
        Adam {
            config,
            state: BTreeMap::new(),
        }
    }

    /// One update for one named tensor:
    ///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
    ///   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
    pub fn step(&mut self, name: &str, param: &mut Tensor, grad: &Tensor) -> Result<()> {
        if grad.shape() != param.shape() {
            return Err(Error::contract(format!(
                "adam: gradient shape {:?} != parameter shape {:?} for '{name}'",
                grad.shape(),
                param.shape()
            )));
        }
        if !grad.is_finite() {
            return Err(Error::numeric(format!(
                "adam: non-finite gradient for tensor '{name}'"
            )));
        }
        let entry = self.state.entry(name.to_string()).or_insert_with(|| Moments {
            m: Tensor::zeros(param.shape().to_vec()),
            v: Tensor::zeros(param.shape().to_vec()),
            t: 0,
        });
        entry.t += 1;
        let (b1, b2) = (self.config.beta1, self.config.beta2);
        let bc1 = 1.0 - b1.powi(entry.t as i32);
        let bc2 = 1.0 - b2.powi(entry.t as i32);
        for ((p, g), (m, v)) in param
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(entry.m.data_mut().iter_mut().zip(entry.v.data_mut()))
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.config.lr * m_hat / (v_hat.sqrt() + self.config.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = Tensor::vector(&[1.0, -2.0, 3.0]);
        let before = p.clone();
        adam.step("w", &mut p, &Tensor::zeros(vec![3])).unwrap();
        assert_eq!(p.data(), before.data());
    }

    #[test]
    fn first_step_magnitude_follows_bias_corrected_formula() {
        // At t = 1 the update per coordinate is lr * g / (|g| + eps),
        // which is about lr for g of order 1.
        let config = AdamConfig::default();
        let mut adam = Adam::new(config.clone());
        let g = Tensor::vector(&[0.5, -2.0, 1.0]);
        let mut p = Tensor::zeros(vec![3]);
        adam.step("w", &mut p, &g).unwrap();
        for (pv, gv) in p.data().iter().zip(g.data()) {
            let expected = -config.lr * gv / (gv.abs() + config.eps);
            assert!((pv - expected).abs() < 1e-15, "{pv} vs {expected}");
            assert!((pv.abs() - config.lr).abs() < 1e-6);
        }
    }

    #[test]
    fn seeded_runs_are_bit_identical_after_five_steps() {
        let run = || {
            let mut rng = crate::numcore::Rng::new(21);
            let mut adam = Adam::new(AdamConfig::default());
            let mut p = Tensor::uniform(vec![8], 1.0, &mut rng);
            for _ in 0..5 {
                let g = Tensor::uniform(vec![8], 1.0, &mut rng);
                adam.step("w", &mut p, &g).unwrap();
            }
            p
        };
        assert_eq!(run().data(), run().data());
    }

    #[test]
    fn non_finite_gradient_names_the_tensor() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = Tensor::zeros(vec![2]);
        let g = Tensor::vector(&[f64::NAN, 0.0]);
        match adam.step("gru0.f.wz", &mut p, &g) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("gru0.f.wz")),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }
}
