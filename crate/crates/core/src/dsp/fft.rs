//! Iterative radix-2 FFT on f64 complex pairs.

use crate::error::{Error, Result};

/// In-place radix-2 Cooley-Tukey FFT. `re`/`im` lengths must be equal and a
/// power of two.
pub fn fft(re: &mut [f64], im: &mut [f64]) -> Result<()> {
    let n = re.len();
    if n != im.len() {
        return Err(Error::contract("fft: re/im length mismatch"));
    }
    if n == 0 || n & (n - 1) != 0 {
        return Err(Error::contract(format!("fft: length {n} not a power of two")));
    }

    // Bit-reversal permutation.
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }

    let mut len = 2;
    while len <= n {
        let ang = -2.0 * std::f64::consts::PI / len as f64;
        let (wr, wi) = (ang.cos(), ang.sin());
        let mut start = 0;
        while start < n {
            let (mut cr, mut ci) = (1.0f64, 0.0f64);
            for k in 0..len / 2 {
                let a = start + k;
                let b = a + len / 2;
                let tr = re[b] * cr - im[b] * ci;
                let ti = re[b] * ci + im[b] * cr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                let ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
            start += len;
        }
        len <<= 1;
    }
    Ok(())
}

pub fn next_power_of_two(n: usize) -> usize {
    n.next_power_of_two()
}

/// Power spectrum |X_k|^2 for k = 0..=N/2 of a real frame, zero-padded to
/// the next power of two.
pub fn power_spectrum(frame: &[f64], fft_len: usize) -> Result<Vec<f64>> {
    let mut re = vec![0.0; fft_len];
    let mut im = vec![0.0; fft_len];
    re[..frame.len()].copy_from_slice(frame);
    fft(&mut re, &mut im)?;
    Ok((0..=fft_len / 2)
        .map(|k| re[k] * re[k] + im[k] * im[k])
        .collect())
}

/// Slow direct DFT magnitude, used as an independent oracle in tests.
pub fn dft_magnitude(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    (0..=n / 2)
        .map(|k| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (t, &x) in frame.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                re += x * ang.cos();
                im += x * ang.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    #[test]
    fn matches_direct_dft() {
        let mut rng = Rng::new(1);
        let x: Vec<f64> = (0..64).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let mut re = x.clone();
        let mut im = vec![0.0; 64];
        fft(&mut re, &mut im).unwrap();
        let oracle = dft_magnitude(&x);
        for k in 0..=32 {
            let mag = (re[k] * re[k] + im[k] * im[k]).sqrt();
            assert!((mag - oracle[k]).abs() < 1e-9, "bin {k}: {mag} vs {}", oracle[k]);
        }
    }

    #[test]
    fn parseval_identity_length_512() {
        let mut rng = Rng::new(2);
        for trial in 0..5 {
            let x: Vec<f64> = (0..512).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let time_energy: f64 = x.iter().map(|v| v * v).sum();
            let mut re = x.clone();
            let mut im = vec![0.0; 512];
            fft(&mut re, &mut im).unwrap();
            let freq_energy: f64 =
                re.iter().zip(&im).map(|(r, i)| r * r + i * i).sum::<f64>() / 512.0;
            let rel = (time_energy - freq_energy).abs() / time_energy;
            assert!(rel < 1e-9, "trial {trial}: relative error {rel}");
        }
    }

    #[test]
    fn rejects_non_power_of_two() {
        let mut re = vec![0.0; 12];
        let mut im = vec![0.0; 12];
        assert!(fft(&mut re, &mut im).is_err());
    }
}
