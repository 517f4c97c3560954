//! Wald z-tests on fitted fixed effects.
//!
//! p-values use the normal approximation p = 2 (1 - Phi(|beta / se|)); no
//! degrees-of-freedom correction is applied, which is documented behavior.

use crate::error::{Error, Result};
use crate::stats::lmm::LmmFit;

/// Complementary error function, accurate to about 1.2e-7 relative
/// (rational Chebyshev approximation).
pub fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398
                                    + t * (1.48851587
                                        + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone)]
pub struct WaldRow {
    pub term: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z_value: f64,
    pub p_value: f64,
    pub significant: bool,
}

/// z, two-sided p, and a p < 0.05 flag per fixed effect.
pub fn wald_report(fit: &LmmFit) -> Result<Vec<WaldRow>> {
    if fit.beta.len() != fit.se.len() || fit.beta.len() != fit.fixed_names.len() {
        return Err(Error::contract("wald_report: inconsistent fit vectors"));
    }
    Ok(fit
        .fixed_names
        .iter()
        .zip(fit.beta.iter().zip(&fit.se))
        .map(|(name, (&beta, &se))| {
            let (z, p) = if se > 0.0 {
                let z = beta / se;
                // 2 (1 - Phi(|z|)) computed as erfc(|z| / sqrt(2)) to avoid
                // cancellation, clamped into [0, 1].
                let p = erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0);
                (z, p)
            } else if beta == 0.0 {
                (0.0, 1.0)
            } else {
                // SE -> 0 limit with a nonzero estimate.
                (f64::INFINITY * beta.signum(), 0.0)
            };
            WaldRow {
                term: name.clone(),
                estimate: beta,
                std_error: se,
                z_value: z,
                p_value: p,
                significant: p < 0.05,
            }
        })
        .collect())
}
