//! Feature-sequence file formats.
//!
//! Binary layout (little-endian):
//!   magic "VGSF", u32 dim, u32 n_frames, f64 frame_shift,
//!   then n_frames * dim f64 values in time-major order.
//!
//! A CSV writer is provided for eyeballing features; the binary form is the
//! one the pipeline consumes.

use std::io::{Read, Write};
use std::path::Path;

use crate::dsp::mfcc::FeatureSequence;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"VGSF";

pub fn write_features(path: &Path, seq: &FeatureSequence) -> Result<()> {
    seq.validate()?;
    let dim = seq.dim();
    let mut out = Vec::with_capacity(20 + seq.n_frames() * dim * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(seq.n_frames() as u32).to_le_bytes());
    out.extend_from_slice(&seq.frame_shift.to_le_bytes());
    for frame in &seq.frames {
        for v in frame {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<FeatureSequence> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 20 || &bytes[0..4] != MAGIC {
        return Err(Error::ingest(format!(
            "{}: not a feature file",
            path.display()
        )));
    }
    let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let n_frames = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let frame_shift = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let expected = 20 + n_frames * dim * 8;
    if bytes.len() != expected {
        return Err(Error::ingest(format!(
            "{}: payload is {} bytes, header implies {}",
            path.display(),
            bytes.len(),
            expected
        )));
    }
    let mut frames = Vec::with_capacity(n_frames);
    let mut at = 20;
    for _ in 0..n_frames {
        let mut row = Vec::with_capacity(dim);
        for _ in 0..dim {
            row.push(f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()));
            at += 8;
        }
        frames.push(row);
    }
    let source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let seq = FeatureSequence {
        frames,
        frame_shift,
        source_id,
    };
    seq.validate()?;
    Ok(seq)
}

pub fn write_features_csv(path: &Path, seq: &FeatureSequence) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!(
        "# dim={} n_frames={} frame_shift={}\n",
        seq.dim(),
        seq.n_frames(),
        seq.frame_shift
    ));
    for frame in &seq.frames {
        let row: Vec<String> = frame.iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}
