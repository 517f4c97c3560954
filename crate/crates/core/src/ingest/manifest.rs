//! Dataset manifests and the flat image-vector file.
//!
//! The manifest is versioned JSON listing caption entries (utterance id,
//! speaker, audio or precomputed-feature path, paired image, caption text,
//! split tag) and image entries (image id, feature-vector path). All paths
//! are relative to the manifest's directory.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionEntry {
    pub utterance_id: String,
    pub speaker_id: String,
    /// Path to a mono WAV, when features still need extraction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<String>,
    /// Path to an extracted feature file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<String>,
    pub image_id: String,
    pub text: String,
    /// "train", "val" or "test".
    pub split: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub image_id: String,
    pub features: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub seed: u64,
    pub captions: Vec<CaptionEntry>,
    pub images: Vec<ImageEntry>,
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::ingest(format!(
                "manifest schema version {} unsupported (expected {MANIFEST_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let mut image_ids = BTreeSet::new();
        for img in &self.images {
            if !image_ids.insert(&img.image_id) {
                return Err(Error::ingest(format!(
                    "duplicate image id '{}'",
                    img.image_id
                )));
            }
        }
        let mut utt_ids = BTreeSet::new();
        for cap in &self.captions {
            if !utt_ids.insert(&cap.utterance_id) {
                return Err(Error::ingest(format!(
                    "duplicate utterance id '{}'",
                    cap.utterance_id
                )));
            }
            if !image_ids.contains(&cap.image_id) {
                return Err(Error::ingest(format!(
                    "caption '{}' references unknown image '{}'",
                    cap.utterance_id, cap.image_id
                )));
            }
            if cap.audio.is_none() && cap.features.is_none() {
                return Err(Error::ingest(format!(
                    "caption '{}' has neither audio nor features",
                    cap.utterance_id
                )));
            }
            if !matches!(cap.split.as_str(), "train" | "val" | "test") {
                return Err(Error::ingest(format!(
                    "caption '{}' has unknown split '{}'",
                    cap.utterance_id, cap.split
                )));
            }
        }
        Ok(())
    }

    /// Check that every referenced file exists under `base_dir`.
    pub fn validate_files(&self, base_dir: &Path) -> Result<()> {
        let mut missing = Vec::new();
        for cap in &self.captions {
            if let Some(p) = &cap.features {
                if !base_dir.join(p).is_file() {
                    missing.push(p.clone());
                }
            }
            if let Some(p) = &cap.audio {
                if !base_dir.join(p).is_file() {
                    missing.push(p.clone());
                }
            }
        }
        for img in &self.images {
            if !base_dir.join(&img.features).is_file() {
                missing.push(img.features.clone());
            }
        }
        if !missing.is_empty() {
            missing.sort();
            missing.dedup();
            return Err(Error::ingest(format!(
                "manifest references {} missing files, e.g. {}",
                missing.len(),
                missing
                    .iter()
                    .take(5)
                    .cloned()
                    .collect::<Vec<_>>()
                    .join(", ")
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::ingest(format!("manifest encode: {e}")))?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }

    /// Load, validate structure, and check that referenced files exist.
    pub fn load(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ingest(format!("{}: {e}", path.display())))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::ingest(format!("{}: {e}", path.display())))?;
        manifest.validate()?;
        let base = path.parent().unwrap_or(Path::new("."));
        manifest.validate_files(base)?;
        Ok(manifest)
    }

    pub fn base_dir(path: &Path) -> PathBuf {
        path.parent().unwrap_or(Path::new(".")).to_path_buf()
    }

    pub fn captions_in_split(&self, split: &str) -> Vec<&CaptionEntry> {
        self.captions
            .iter()
            .filter(|c| split == "all" || c.split == split)
            .collect()
    }

    /// Image entries referenced by at least one caption of `split`
    /// ("all" keeps every image), in manifest order.
    pub fn images_in_split(&self, split: &str) -> Vec<&ImageEntry> {
        if split == "all" {
            return self.images.iter().collect();
        }
        let wanted: BTreeSet<&String> = self
            .captions
            .iter()
            .filter(|c| c.split == split)
            .map(|c| &c.image_id)
            .collect();
        self.images
            .iter()
            .filter(|i| wanted.contains(&i.image_id))
            .collect()
    }

    /// Case-folded caption words per image id, over all captions.
    pub fn image_caption_words(&self) -> std::collections::BTreeMap<String, Vec<String>> {
        let mut map: std::collections::BTreeMap<String, BTreeSet<String>> =
            std::collections::BTreeMap::new();
        for cap in &self.captions {
            let entry = map.entry(cap.image_id.clone()).or_default();
            for w in tokenize(&cap.text) {
                entry.insert(w);
            }
        }
        map.into_iter()
            .map(|(k, v)| (k, v.into_iter().collect()))
            .collect()
    }
}

/// Case-folded word tokens of a caption: whitespace-split with surrounding
/// punctuation trimmed.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

const VECTOR_MAGIC: &[u8; 4] = b"VGSV";

/// Write a plain feature vector (image features).
pub fn write_vector(path: &Path, values: &[f64]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + values.len() * 8);
    out.extend_from_slice(VECTOR_MAGIC);
    out.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[0..4] != VECTOR_MAGIC {
        return Err(Error::ingest(format!(
            "{}: not a vector file",
            path.display()
        )));
    }
    let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if bytes.len() != 8 + dim * 8 {
        return Err(Error::ingest(format!(
            "{}: truncated vector payload",
            path.display()
        )));
    }
    Ok(bytes[8..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
