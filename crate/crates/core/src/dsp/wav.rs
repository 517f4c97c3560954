//! Minimal RIFF/WAVE reader and writer.
//!
//! Supports the two encodings the pipeline ingests: 16-bit integer PCM and
//! 32-bit IEEE float, single channel only. Multi-channel files are rejected
//! rather than silently mixed down.

use std::io::{Read, Write};
use std::path::Path;

use crate::dsp::mfcc::Waveform;
use crate::error::{Error, Result};

fn read_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

pub fn read_wav(path: &Path) -> Result<Waveform> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_wav(&bytes).map_err(|e| match e {
        Error::Ingest(msg) => Error::ingest(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_wav(bytes: &[u8]) -> Result<Waveform> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::ingest("not a RIFF/WAVE file"));
    }

    let mut format: Option<(u16, u16, u32, u16)> = None; // (tag, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    let mut at = 12;
    while at + 8 <= bytes.len() {
        let id = &bytes[at..at + 4];
        let size = read_u32(bytes, at + 4) as usize;
        let body_end = at + 8 + size;
        if body_end > bytes.len() {
            return Err(Error::ingest("truncated chunk"));
        }
        let body = &bytes[at + 8..body_end];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::ingest("fmt chunk too short"));
                }
                format = Some((
                    read_u16(body, 0),
                    read_u16(body, 2),
                    read_u32(body, 4),
                    read_u16(body, 14),
                ));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // Chunks are word-aligned.
        at = body_end + (size & 1);
    }

    let (tag, channels, rate, bits) =
        format.ok_or_else(|| Error::ingest("missing fmt chunk"))?;
    let data = data.ok_or_else(|| Error::ingest("missing data chunk"))?;
    if channels != 1 {
        return Err(Error::ingest(format!(
            "expected mono audio, got {channels} channels"
        )));
    }
    if rate == 0 {
        return Err(Error::ingest("zero sample rate"));
    }

    let samples = match (tag, bits) {
        (1, 16) => data
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
            .collect(),
        (3, 32) => data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        _ => {
            return Err(Error::ingest(format!(
                "unsupported encoding: format tag {tag}, {bits} bits"
            )))
        }
    };

    Ok(Waveform {
        samples,
        sample_rate: rate,
    })
}

/// Write a mono 16-bit PCM WAV file. Samples are clamped to [-1, 1].
pub fn write_wav_pcm16(path: &Path, wave: &Waveform) -> Result<()> {
    let n = wave.samples.len();
    let data_size = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_size).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&wave.sample_rate.to_le_bytes());
    out.extend_from_slice(&(wave.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_size.to_le_bytes());
    for &s in &wave.samples {
        let v = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}
