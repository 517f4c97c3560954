//! Synthetic desk-scale dataset generator.
//!
//! Each class is a pseudo-word built from real ARPAbet phones; every phone
//! has a fixed 39-dim feature motif, and a token is the concatenation of
//! its phones' motifs (a few frames each) plus per-token jitter and a
//! per-speaker offset. Images are class prototype vectors plus per-token
//! noise. Words deliberately share initial phones and near-neighbors so
//! cohort sizes and neighborhood densities vary, and the last token of each
//! class is held out as validation so every validation caption's correct
//! image is the only image of its class in the validation store.
//!
//! Everything, including file bytes, is deterministic under the seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::{write_features, FeatureSequence};
use crate::error::{Error, Result};
use crate::ingest::manifest::{
    tokenize, write_vector, CaptionEntry, ImageEntry, Manifest, MANIFEST_SCHEMA_VERSION,
};
use crate::numcore::Rng;

/// The word pool; `n_classes` takes a prefix of it. The first eight words
/// are arranged so that competition statistics vary (shared initial
/// phones, one-substitution neighbors) and so that vowel and consonant
/// counts each take every value on at least two words — otherwise
/// frequency-by-count interaction columns collapse into the main effects.
const WORD_POOL: &[(&str, &[&str])] = &[
    ("cat", &["K", "AE", "T"]),
    ("can", &["K", "AE", "N"]),
    ("man", &["M", "AE", "N"]),
    ("mat", &["M", "AE", "T"]),
    ("cow", &["K", "AW"]),
    ("bee", &["B", "IY"]),
    ("water", &["W", "AO", "T", "ER"]),
    ("sofa", &["S", "OW", "F", "AH"]),
    ("bike", &["B", "AY", "K"]),
    ("bird", &["B", "ER", "D"]),
    ("dog", &["D", "AO", "G"]),
    ("boat", &["B", "OW", "T"]),
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToySpec {
    pub n_classes: usize,
    pub tokens_per_class: usize,
    pub image_dim: usize,
    /// Base frames per phone; each (token, phone) adds 0..=frame_jitter.
    pub frames_per_phone: usize,
    pub frame_jitter: usize,
    /// Uniform feature jitter amplitude.
    pub feature_noise: f64,
    /// Uniform image-vector noise amplitude.
    pub image_noise: f64,
    pub n_speakers: usize,
    /// Amplitude of the fixed per-speaker feature offset.
    pub speaker_offset: f64,
    /// Every `corrupt_every`-th token of a class (offset by the class
    /// index) is rendered as pure noise with no phone motifs and tagged
    /// with the `test` split so it is never trained on: deliberately
    /// unintelligible tokens whose retrieval scores stay imperfect even
    /// once the model has learned the classes. 0 disables corruption;
    /// validation tokens are never corrupted.
    pub corrupt_every: usize,
    /// Noise amplitude multiplier for corrupted tokens.
    pub corrupt_scale: f64,
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec {
            n_classes: 8,
            tokens_per_class: 32,
            image_dim: 16,
            frames_per_phone: 6,
            frame_jitter: 3,
            feature_noise: 0.10,
            image_noise: 0.05,
            n_speakers: 4,
            speaker_offset: 0.05,
            corrupt_every: 11,
            corrupt_scale: 18.0,
            seed: 0,
        }
    }
}

impl ToySpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::contract("toy spec: need at least 2 classes"));
        }
        if self.n_classes > WORD_POOL.len() {
            return Err(Error::contract(format!(
                "toy spec: at most {} classes available",
                WORD_POOL.len()
            )));
        }
        if self.tokens_per_class < 2 {
            return Err(Error::contract(
                "toy spec: need at least 2 tokens per class (train + val)",
            ));
        }
        if self.image_dim == 0 || self.frames_per_phone == 0 || self.n_speakers == 0 {
            return Err(Error::contract("toy spec: sizes must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ToyOutput {
    pub manifest_path: PathBuf,
    pub align_path: PathBuf,
    pub lexicon_path: PathBuf,
    pub relevance_path: PathBuf,
    pub features_dir: PathBuf,
    pub images_dir: PathBuf,
    pub n_captions: usize,
    pub n_images: usize,
    pub words: Vec<String>,
}

/// Generate the dataset under `out_dir`: manifest.json, align.csv,
/// lexicon.txt, relevance.json, feats/*.feat, imgs/*.vec.
pub fn generate_toy(spec: &ToySpec, out_dir: &Path) -> Result<ToyOutput> {
    spec.validate()?;
    let feats_dir = out_dir.join("feats");
    let imgs_dir = out_dir.join("imgs");
    std::fs::create_dir_all(&feats_dir)?;
    std::fs::create_dir_all(&imgs_dir)?;

    let words: Vec<(&str, &[&str])> = WORD_POOL[..spec.n_classes].to_vec();
    let mut rng = Rng::new(spec.seed);

    // Fixed draw order: phone motifs, class images, speaker offsets, then
    // per-token material.
    let mut phone_motifs: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (_, phones) in &words {
        for p in *phones {
            phone_motifs.entry(p.to_string()).or_default();
        }
    }
    for motif in phone_motifs.values_mut() {
        *motif = (0..39).map(|_| rng.uniform(-1.0, 1.0)).collect();
    }
    let class_images: Vec<Vec<f64>> = (0..spec.n_classes)
        .map(|_| (0..spec.image_dim).map(|_| rng.uniform(-1.0, 1.0)).collect())
        .collect();
    let speaker_offsets: Vec<Vec<f64>> = (0..spec.n_speakers)
        .map(|_| {
            (0..39)
                .map(|_| spec.speaker_offset * rng.uniform(-1.0, 1.0))
                .collect()
        })
        .collect();

    let mut captions = Vec::new();
    let mut images = Vec::new();
    let mut align_lines =
        vec!["utterance_id,word,speaker_id,phone,start_frame,end_frame".to_string()];

    for (class_idx, (word, phones)) in words.iter().enumerate() {
        for t in 0..spec.tokens_per_class {
            let utt_id = format!("utt_{word}_{t:03}");
            let img_id = format!("img_{word}_{t:03}");
            let speaker = t % spec.n_speakers;
            let speaker_id = format!("spk{speaker}");

            // Features: one motif block per phone. A deterministic subset
            // of training tokens is replaced by pure noise.
            let is_val = t == spec.tokens_per_class - 1;
            let corrupted = spec.corrupt_every != 0
                && !is_val
                && (t + class_idx) % spec.corrupt_every == 0;
            let mut frames: Vec<Vec<f64>> = Vec::new();
            let mut spans = Vec::new();
            for p in *phones {
                let len = spec.frames_per_phone + rng.below(spec.frame_jitter + 1);
                let start = frames.len();
                let motif = &phone_motifs[*p];
                for _ in 0..len {
                    let frame: Vec<f64> = motif
                        .iter()
                        .zip(&speaker_offsets[speaker])
                        .map(|(m, o)| {
                            if corrupted {
                                o + spec.feature_noise
                                    * spec.corrupt_scale
                                    * rng.uniform(-1.0, 1.0)
                            } else {
                                m + o + spec.feature_noise * rng.uniform(-1.0, 1.0)
                            }
                        })
                        .collect();
                    frames.push(frame);
                }
                spans.push((p.to_string(), start, frames.len()));
            }
            let seq = FeatureSequence {
                frames,
                frame_shift: 0.01,
                source_id: utt_id.clone(),
            };
            write_features(&feats_dir.join(format!("{utt_id}.feat")), &seq)?;
            for (p, s, e) in &spans {
                align_lines.push(format!("{utt_id},{word},{speaker_id},{p},{s},{e}"));
            }

            // Image vector: class prototype plus per-token noise.
            let image: Vec<f64> = class_images[class_idx]
                .iter()
                .map(|v| v + spec.image_noise * rng.uniform(-1.0, 1.0))
                .collect();
            write_vector(&imgs_dir.join(format!("{img_id}.vec")), &image)?;

            // Caption text: the word, mentioned twice on a deterministic
            // schedule so training frequencies differ across classes.
            let text = if t % spec.n_classes < class_idx {
                format!("{word} {word}")
            } else {
                (*word).to_string()
            };
            let split = if is_val {
                "val"
            } else if corrupted {
                "test"
            } else {
                "train"
            };
            captions.push(CaptionEntry {
                utterance_id: utt_id,
                speaker_id,
                audio: None,
                features: Some(format!("feats/utt_{word}_{t:03}.feat")),
                image_id: img_id.clone(),
                text,
                split: split.to_string(),
            });
            images.push(ImageEntry {
                image_id: img_id,
                features: format!("imgs/img_{word}_{t:03}.vec"),
            });
        }
    }

    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        seed: spec.seed,
        captions,
        images,
    };
    let manifest_path = out_dir.join("manifest.json");
    manifest.save(&manifest_path)?;

    let align_path = out_dir.join("align.csv");
    std::fs::write(&align_path, align_lines.join("\n") + "\n")?;

    // Lexicon with frequencies counted over training captions.
    let mut freq: BTreeMap<String, u64> = BTreeMap::new();
    for cap in manifest.captions_in_split("train") {
        for w in tokenize(&cap.text) {
            *freq.entry(w).or_insert(0) += 1;
        }
    }
    let mut lexicon_lines = Vec::new();
    for (word, phones) in &words {
        let f = freq.get(*word).copied().unwrap_or(0);
        lexicon_lines.push(format!("{word}\t{f}\t{}", phones.join(" ")));
    }
    let lexicon_path = out_dir.join("lexicon.txt");
    std::fs::write(&lexicon_path, lexicon_lines.join("\n") + "\n")?;

    // Relevance: every image whose caption mentions the word.
    let caption_words = manifest.image_caption_words();
    let mut relevance: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (word, _) in &words {
        let ids: Vec<String> = caption_words
            .iter()
            .filter(|(_, ws)| ws.iter().any(|w| w == word))
            .map(|(id, _)| id.clone())
            .collect();
        relevance.insert((*word).to_string(), ids);
    }
    let relevance_path = out_dir.join("relevance.json");
    let relevance_json = serde_json::to_string_pretty(&relevance)
        .map_err(|e| Error::ingest(format!("relevance encode: {e}")))?;
    std::fs::write(&relevance_path, relevance_json + "\n")?;

    Ok(ToyOutput {
        manifest_path,
        align_path,
        lexicon_path,
        relevance_path,
        features_dir: feats_dir,
        images_dir: imgs_dir,
        n_captions: manifest.captions.len(),
        n_images: manifest.images.len(),
        words: words.iter().map(|(w, _)| w.to_string()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::read_features;

    fn tmp(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("vgslab_toy_test").join(name);
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn counting_contract_eight_by_thirtytwo() {
        let spec = ToySpec::default();
        let out = generate_toy(&spec, &tmp("counts")).unwrap();
        assert_eq!(out.n_captions, 256);
        assert_eq!(out.n_images, 256);
        assert_eq!(out.words.len(), 8);
        let lexicon = crate::lexicon::Lexicon::load(&out.lexicon_path).unwrap();
        assert_eq!(lexicon.len(), 8);
    }

    #[test]
    fn zero_noise_makes_class_tokens_identical() {
        let spec = ToySpec {
            n_classes: 2,
            tokens_per_class: 3,
            feature_noise: 0.0,
            image_noise: 0.0,
            frame_jitter: 0,
            speaker_offset: 0.0,
            n_speakers: 2,
            corrupt_every: 0,
            ..ToySpec::default()
        };
        let dir = tmp("zero_noise");
        let out = generate_toy(&spec, &dir).unwrap();
        let a = read_features(&out.features_dir.join("utt_cat_000.feat")).unwrap();
        let b = read_features(&out.features_dir.join("utt_cat_001.feat")).unwrap();
        assert_eq!(a.frames, b.frames);
        let va = crate::ingest::manifest::read_vector(&out.images_dir.join("img_cat_000.vec"))
            .unwrap();
        let vb = crate::ingest::manifest::read_vector(&out.images_dir.join("img_cat_001.vec"))
            .unwrap();
        assert_eq!(va, vb);
    }

    #[test]
    fn same_seed_produces_byte_identical_trees() {
        let spec = ToySpec {
            n_classes: 3,
            tokens_per_class: 4,
            ..ToySpec::default()
        };
        let dir_a = tmp("det_a");
        let dir_b = tmp("det_b");
        generate_toy(&spec, &dir_a).unwrap();
        generate_toy(&spec, &dir_b).unwrap();

        let mut paths: Vec<PathBuf> = Vec::new();
        for sub in ["", "feats", "imgs"] {
            let d = if sub.is_empty() {
                dir_a.clone()
            } else {
                dir_a.join(sub)
            };
            for entry in std::fs::read_dir(&d).unwrap() {
                let p = entry.unwrap().path();
                if p.is_file() {
                    paths.push(p);
                }
            }
        }
        assert!(paths.len() > 10);
        for pa in paths {
            let rel = pa.strip_prefix(&dir_a).unwrap();
            let pb = dir_b.join(rel);
            let ba = std::fs::read(&pa).unwrap();
            let bb = std::fs::read(&pb).unwrap();
            assert_eq!(ba, bb, "file {} differs between runs", rel.display());
        }
    }

    #[test]
    fn validation_split_holds_out_one_token_per_class() {
        let spec = ToySpec {
            n_classes: 4,
            tokens_per_class: 5,
            corrupt_every: 0,
            ..ToySpec::default()
        };
        let out = generate_toy(&spec, &tmp("split")).unwrap();
        let manifest = Manifest::load(&out.manifest_path).unwrap();
        let val = manifest.captions_in_split("val");
        assert_eq!(val.len(), 4);
        let train = manifest.captions_in_split("train");
        assert_eq!(train.len(), 16);
        // Each val caption's class appears exactly once in the val images.
        let val_imgs = manifest.images_in_split("val");
        assert_eq!(val_imgs.len(), 4);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(ToySpec {
            n_classes: 1,
            ..ToySpec::default()
        }
        .validate()
        .is_err());
        assert!(ToySpec {
            n_classes: 99,
            ..ToySpec::default()
        }
        .validate()
        .is_err());
        assert!(ToySpec {
            tokens_per_class: 1,
            ..ToySpec::default()
        }
        .validate()
        .is_err());
    }
}
