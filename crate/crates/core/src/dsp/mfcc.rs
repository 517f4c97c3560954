//! 39-dimensional MFCC front end: log energy + 12 cepstra, with first and
//! second derivatives appended.

use serde::{Deserialize, Serialize};

use crate::dsp::fft::{next_power_of_two, power_spectrum};
use crate::dsp::mel::{dct2, filterbank};
use crate::error::{Error, Result};

/// Mono waveform with samples nominally in [-1, 1].
#[derive(Debug, Clone)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

/// Time-major feature matrix: `frames[t]` is one 39-dim frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub frames: Vec<Vec<f64>>,
    pub frame_shift: f64,
    pub source_id: String,
}

impl FeatureSequence {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn dim(&self) -> usize {
        self.frames.first().map_or(0, |f| f.len())
    }

    /// Frames [0, end) of this sequence.
    pub fn prefix(&self, end: usize) -> FeatureSequence {
        FeatureSequence {
            frames: self.frames[..end.min(self.frames.len())].to_vec(),
            frame_shift: self.frame_shift,
            source_id: self.source_id.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (t, f) in self.frames.iter().enumerate() {
            if f.len() != self.dim() {
                return Err(Error::ingest(format!(
                    "{}: frame {t} has dim {} != {}",
                    self.source_id,
                    f.len(),
                    self.dim()
                )));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric(format!(
                    "{}: non-finite value in frame {t}",
                    self.source_id
                )));
            }
        }
        Ok(())
    }
}

/// MFCC configuration. Window/shift/filter count are not dictated by the
/// feature definition itself; the defaults below are the usual ASR front-end
/// conventions and every one of them is adjustable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MfccConfig {
    /// Analysis window in seconds (default 25 ms, Hamming).
    pub window_s: f64,
    /// Frame shift in seconds (default 10 ms).
    pub shift_s: f64,
    /// Pre-emphasis coefficient (default 0.97).
    pub pre_emphasis: f64,
    /// Number of triangular mel filters (default 26).
    pub n_filters: usize,
    /// Cepstral coefficients kept: c1..=n_cepstra (default 12; c0 is
    /// replaced by the log-energy feature).
    pub n_cepstra: usize,
    /// Delta regression window (default 2).
    pub delta_window: usize,
    /// Energy floor applied before logs (default 1e-10).
    pub energy_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            window_s: 0.025,
            shift_s: 0.010,
            pre_emphasis: 0.97,
            n_filters: 26,
            n_cepstra: 12,
            delta_window: 2,
            energy_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    pub fn feature_dim(&self) -> usize {
        3 * (self.n_cepstra + 1)
    }

    pub fn window_samples(&self, sample_rate: u32) -> usize {
        (self.window_s * sample_rate as f64).round() as usize
    }

    pub fn shift_samples(&self, sample_rate: u32) -> usize {
        (self.shift_s * sample_rate as f64).round() as usize
    }
}

/// Number of frames produced for `n_samples` of audio:
/// floor((N - window) / shift) + 1, or an error when N < window.
pub fn frame_count(n_samples: usize, window: usize, shift: usize) -> Result<usize> {
    if window == 0 || shift == 0 {
        return Err(Error::contract("frame_count: window and shift must be positive"));
    }
    if n_samples < window {
        return Err(Error::degenerate(format!(
            "waveform of {n_samples} samples shorter than window {window}"
        )));
    }
    Ok((n_samples - window) / shift + 1)
}

/// Compute the full 39-dim MFCC sequence:
/// [log energy, c1..c12] plus delta and delta-delta blocks.
pub fn mfcc(wave: &Waveform, config: &MfccConfig) -> Result<FeatureSequence> {
    if wave.sample_rate == 0 {
        return Err(Error::contract("mfcc: sample_rate must be positive"));
    }
    let window = config.window_samples(wave.sample_rate);
    let shift = config.shift_samples(wave.sample_rate);
    let n_frames = frame_count(wave.samples.len(), window, shift)?;
    let fft_len = next_power_of_two(window);
    let bank = filterbank(config.n_filters, fft_len, wave.sample_rate)?;
    let hamming: Vec<f64> = (0..window)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (window - 1) as f64).cos())
        .collect();

    let base_dim = config.n_cepstra + 1;
    let mut base = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let start = t * shift;
        let raw = &wave.samples[start..start + window];

        // Log energy from the raw frame, floored before the log.
        let energy: f64 = raw.iter().map(|s| s * s).sum();
        let log_e = energy.max(config.energy_floor).ln();

        // Pre-emphasis (continuing across the frame edge), then window.
        let mut frame = vec![0.0; window];
        for i in 0..window {
            let prev = if start + i == 0 {
                0.0
            } else {
                wave.samples[start + i - 1]
            };
            frame[i] = (raw[i] - config.pre_emphasis * prev) * hamming[i];
        }

        let spectrum = power_spectrum(&frame, fft_len)?;
        let log_mel: Vec<f64> = bank
            .iter()
            .map(|filter| {
                let e: f64 = filter.iter().zip(&spectrum).map(|(w, p)| w * p).sum();
                e.max(config.energy_floor).ln()
            })
            .collect();
        let cepstra = dct2(&log_mel, config.n_cepstra);

        let mut row = Vec::with_capacity(base_dim);
        row.push(log_e);
        row.extend_from_slice(&cepstra);
        base.push(row);
    }

    let d1 = deltas(&base, config.delta_window)?;
    let d2 = deltas(&d1, config.delta_window)?;
    let frames: Vec<Vec<f64>> = (0..n_frames)
        .map(|t| {
            let mut row = Vec::with_capacity(3 * base_dim);
            row.extend_from_slice(&base[t]);
            row.extend_from_slice(&d1[t]);
            row.extend_from_slice(&d2[t]);
            row
        })
        .collect();

    let seq = FeatureSequence {
        frames,
        frame_shift: config.shift_s,
        source_id: String::new(),
    };
    seq.validate()?;
    Ok(seq)
}

/// Regression deltas with edge replication:
/// d_t = sum_k k (x_{t+k} - x_{t-k}) / (2 sum_k k^2), k = 1..=window.
pub fn deltas(features: &[Vec<f64>], window: usize) -> Result<Vec<Vec<f64>>> {
    if features.is_empty() {
        return Err(Error::degenerate("deltas: empty input"));
    }
    if window == 0 {
        return Err(Error::contract("deltas: window must be >= 1"));
    }
    let t_len = features.len();
    let dim = features[0].len();
    let denom: f64 = 2.0 * (1..=window).map(|k| (k * k) as f64).sum::<f64>();
    let clamp = |t: isize| -> usize { t.clamp(0, t_len as isize - 1) as usize };

    let mut out = vec![vec![0.0; dim]; t_len];
    for t in 0..t_len {
        for d in 0..dim {
            let mut acc = 0.0;
            for k in 1..=window {
                let fwd = features[clamp(t as isize + k as isize)][d];
                let back = features[clamp(t as isize - k as isize)][d];
                acc += k as f64 * (fwd - back);
            }
            out[t][d] = acc / denom;
        }
    }
    Ok(out)
}
