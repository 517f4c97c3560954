//! Mel scale and triangular filterbank.

use crate::error::{Error, Result};

/// 2595 * log10(1 + f / 700).
pub fn hz_to_mel(f: f64) -> Result<f64> {
    if f < 0.0 {
        return Err(Error::contract(format!("hz_to_mel: negative frequency {f}")));
    }
    Ok(2595.0 * (1.0 + f / 700.0).log10())
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank over the one-sided power spectrum.
///
/// Rows are filters (n_filters x (fft_len/2 + 1)), spanning 0 Hz to Nyquist
/// with peaks equally spaced on the mel scale.
pub fn filterbank(n_filters: usize, fft_len: usize, sample_rate: u32) -> Result<Vec<Vec<f64>>> {
    if n_filters == 0 {
        return Err(Error::contract("filterbank: need at least one filter"));
    }
    let nyquist = sample_rate as f64 / 2.0;
    let mel_max = hz_to_mel(nyquist)?;
    let n_bins = fft_len / 2 + 1;

    // n_filters + 2 equally spaced mel points mapped back to Hz.
    let hz_points: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_filters + 1) as f64))
        .collect();
    let bin_freq = |k: usize| k as f64 * sample_rate as f64 / fft_len as f64;

    let mut bank = vec![vec![0.0; n_bins]; n_filters];
    for (m, row) in bank.iter_mut().enumerate() {
        let (lo, center, hi) = (hz_points[m], hz_points[m + 1], hz_points[m + 2]);
        for (k, w) in row.iter_mut().enumerate() {
            let f = bin_freq(k);
            if f > lo && f < center {
                *w = (f - lo) / (center - lo);
            } else if (f - center).abs() < 1e-12 {
                *w = 1.0;
            } else if f > center && f < hi {
                *w = (hi - f) / (hi - center);
            }
        }
    }
    Ok(bank)
}

/// DCT-II basis applied to log filterbank energies; returns coefficients
/// 1..=n_coeffs (c0 is intentionally excluded by the caller's indexing).
pub fn dct2(input: &[f64], n_coeffs: usize) -> Vec<f64> {
    let n = input.len() as f64;
    (1..=n_coeffs)
        .map(|c| {
            let mut acc = 0.0;
            for (j, &x) in input.iter().enumerate() {
                acc += x * (std::f64::consts::PI * c as f64 * (j as f64 + 0.5) / n).cos();
            }
            acc * (2.0 / n).sqrt()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_hz_is_zero_mel() {
        assert_eq!(hz_to_mel(0.0).unwrap(), 0.0);
    }

    #[test]
    fn one_khz_is_about_one_thousand_mel() {
        let m = hz_to_mel(1000.0).unwrap();
        assert!((m - 1000.1).abs() < 0.5, "1 kHz -> {m} mel");
    }

    #[test]
    fn mel_roundtrip_identity() {
        for &f in &[100.0, 4000.0, 7999.0] {
            let back = mel_to_hz(hz_to_mel(f).unwrap());
            assert!((back - f).abs() < 1e-9, "{f} -> {back}");
        }
    }

    #[test]
    fn negative_frequency_rejected() {
        assert!(hz_to_mel(-1.0).is_err());
    }

    #[test]
    fn filters_nonnegative_with_positive_mass_and_overlap() {
        let bank = filterbank(26, 512, 16000).unwrap();
        for (m, row) in bank.iter().enumerate() {
            assert!(row.iter().all(|&w| w >= 0.0));
            let mass: f64 = row.iter().sum();
            assert!(mass > 0.0, "filter {m} has zero mass");
        }
        for m in 0..bank.len() - 1 {
            let overlap = bank[m]
                .iter()
                .zip(&bank[m + 1])
                .any(|(a, b)| *a > 0.0 && *b > 0.0);
            assert!(overlap, "filters {m} and {} do not overlap", m + 1);
        }
    }
}
