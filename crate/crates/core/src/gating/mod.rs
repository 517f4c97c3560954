//! Aligned word tokens and the two retrieval experiments over them:
//! whole-token word recognition and the gating paradigm, where each token
//! is presented as phoneme prefixes of increasing length.
//!
//! Alignment file: CSV `utterance_id,word,speaker_id,phone,start_frame,end_frame`
//! with one row per phone, rows ordered by time, and consecutive rows of one
//! utterance_id forming one token. Frame indices refer to the token's
//! feature frames and must tile [0, end of last phone) without gaps.

pub mod io;

use std::collections::BTreeMap;
use std::path::Path;

use crate::dsp::{read_features, FeatureSequence};
use crate::encoders::{embed_speech, EncoderConfig, ModelParams};
use crate::error::{Error, Result};
use crate::retrieval::{precision_at_10, EmbeddingStore, RelevanceMap};

/// One spoken instance of a target word with per-phone frame alignment.
#[derive(Debug, Clone)]
pub struct WordToken {
    pub utterance_id: String,
    pub word: String,
    pub speaker_id: String,
    pub features: FeatureSequence,
    /// (phone, start_frame, end_frame), contiguous from frame 0.
    pub alignment: Vec<(String, usize, usize)>,
}

impl WordToken {
    pub fn n_phones(&self) -> usize {
        self.alignment.len()
    }

    pub fn n_frames(&self) -> usize {
        self.features.n_frames()
    }

    pub fn phones(&self) -> Vec<String> {
        self.alignment.iter().map(|(p, _, _)| p.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.alignment.is_empty() {
            return Err(Error::ingest(format!(
                "token {}: no phones in alignment",
                self.utterance_id
            )));
        }
        let mut expected_start = 0usize;
        for (phone, start, end) in &self.alignment {
            if *start != expected_start {
                return Err(Error::ingest(format!(
                    "token {}: phone {phone} starts at {start}, expected {expected_start}",
                    self.utterance_id
                )));
            }
            if end <= start {
                return Err(Error::ingest(format!(
                    "token {}: phone {phone} has empty interval [{start}, {end})",
                    self.utterance_id
                )));
            }
            expected_start = *end;
        }
        if expected_start > self.features.n_frames() {
            return Err(Error::ingest(format!(
                "token {}: alignment ends at frame {} but features have {}",
                self.utterance_id,
                expected_start,
                self.features.n_frames()
            )));
        }
        Ok(())
    }
}

/// Alignment rows without features attached.
#[derive(Debug, Clone)]
pub struct TokenSpec {
    pub utterance_id: String,
    pub word: String,
    pub speaker_id: String,
    pub alignment: Vec<(String, usize, usize)>,
}

/// Parse the alignment CSV. `#`-prefixed lines and the header row are
/// skipped.
pub fn parse_alignment(text: &str) -> Result<Vec<TokenSpec>> {
    let mut tokens: Vec<TokenSpec> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() || line.starts_with('#') || line.starts_with("utterance_id,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::ingest(format!(
                "alignment line {}: expected 6 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let (utt, word, speaker, phone) = (fields[0], fields[1], fields[2], fields[3]);
        let start: usize = fields[4]
            .parse()
            .map_err(|_| Error::ingest(format!("alignment line {}: bad start_frame", lineno + 1)))?;
        let end: usize = fields[5]
            .parse()
            .map_err(|_| Error::ingest(format!("alignment line {}: bad end_frame", lineno + 1)))?;

        match tokens.last_mut() {
            Some(last) if last.utterance_id == utt => {
                if last.word != word || last.speaker_id != speaker {
                    return Err(Error::ingest(format!(
                        "alignment line {}: token {utt} changes word or speaker mid-group",
                        lineno + 1
                    )));
                }
                last.alignment.push((phone.to_string(), start, end));
            }
            _ => tokens.push(TokenSpec {
                utterance_id: utt.to_string(),
                word: word.to_string(),
                speaker_id: speaker.to_string(),
                alignment: vec![(phone.to_string(), start, end)],
            }),
        }
    }
    if tokens.is_empty() {
        return Err(Error::ingest("alignment file contains no tokens"));
    }
    Ok(tokens)
}

/// Load tokens and attach features from `<features_dir>/<utterance_id>.feat`.
pub fn load_tokens(align_path: &Path, features_dir: &Path) -> Result<Vec<WordToken>> {
    let text = std::fs::read_to_string(align_path)?;
    let specs = parse_alignment(&text)?;
    let mut out = Vec::with_capacity(specs.len());
    for spec in specs {
        let feat_path = features_dir.join(format!("{}.feat", spec.utterance_id));
        let features = read_features(&feat_path)?;
        let token = WordToken {
            utterance_id: spec.utterance_id,
            word: spec.word,
            speaker_id: spec.speaker_id,
            features,
            alignment: spec.alignment,
        };
        token.validate()?;
        out.push(token);
    }
    Ok(out)
}

/// Cut a token into its phoneme prefixes. Prefix k covers frames
/// [0, end_frame(phone k)), so each prefix strictly extends the previous.
pub fn segment_prefixes(token: &WordToken) -> Result<Vec<FeatureSequence>> {
    token.validate()?;
    Ok(token
        .alignment
        .iter()
        .map(|(_, _, end)| token.features.prefix(*end))
        .collect())
}

/// Heatmap columns covered by prefix k of an n-phone word, on a 1..=10
/// decile axis: first = floor(10(k-1)/n) + 1, last = floor(10k/n).
/// Over k = 1..=n the bins partition 1..=10.
pub fn decile_bins(n_phones: usize, k: usize) -> Result<(usize, usize)> {
    if n_phones == 0 || k == 0 || k > n_phones {
        return Err(Error::contract(format!(
            "decile_bins: k {k} out of range for {n_phones} phones"
        )));
    }
    let first = 10 * (k - 1) / n_phones + 1;
    let last = 10 * k / n_phones;
    Ok((first, last))
}

/// Precision@10 of one prefix per (token, k).
#[derive(Debug, Clone)]
pub struct GatingResult {
    pub utterance_id: String,
    pub word: String,
    pub speaker_id: String,
    /// Number of phones available in this prefix.
    pub prefix_len: usize,
    pub n_phones: usize,
    /// Frames in the (unpadded) prefix.
    pub prefix_frames: usize,
    pub p_at_10: f64,
    pub first_decile: usize,
    pub last_decile: usize,
}

/// Right-pad with zero frames up to `min_frames` so prefixes shorter than
/// the conv receptive field stay embeddable.
pub fn pad_features(seq: &FeatureSequence, min_frames: usize) -> FeatureSequence {
    if seq.n_frames() >= min_frames {
        return seq.clone();
    }
    let dim = seq.dim();
    let mut frames = seq.frames.clone();
    frames.resize(min_frames, vec![0.0; dim]);
    FeatureSequence {
        frames,
        frame_shift: seq.frame_shift,
        source_id: seq.source_id.clone(),
    }
}

/// Whole-token word recognition: embed each token and score Precision@10
/// against the image store.
#[derive(Debug, Clone)]
pub struct WordRecognitionResult {
    pub utterance_id: String,
    pub word: String,
    pub speaker_id: String,
    pub n_frames: usize,
    pub n_phones: usize,
    pub p_at_10: f64,
}

pub fn run_word_recognition(
    params: &ModelParams,
    config: &EncoderConfig,
    tokens: &[WordToken],
    store: &EmbeddingStore,
    relevance: &RelevanceMap,
) -> Result<Vec<WordRecognitionResult>> {
    let mut out = Vec::with_capacity(tokens.len());
    for token in tokens {
        let padded = pad_features(&token.features, config.min_frames());
        let emb = embed_speech(&padded.frames, params, config)
            .map_err(|e| Error::numeric(format!("token {}: {e}", token.utterance_id)))?;
        let p = precision_at_10(&emb, store, relevance, &token.word)?;
        out.push(WordRecognitionResult {
            utterance_id: token.utterance_id.clone(),
            word: token.word.clone(),
            speaker_id: token.speaker_id.clone(),
            n_frames: token.n_frames(),
            n_phones: token.n_phones(),
            p_at_10: p,
        });
    }
    Ok(out)
}

/// The gating experiment: one result per (token, prefix length),
/// deterministic for a fixed checkpoint, ordered by (token order, k).
pub fn run_gating(
    params: &ModelParams,
    config: &EncoderConfig,
    tokens: &[WordToken],
    store: &EmbeddingStore,
    relevance: &RelevanceMap,
) -> Result<Vec<GatingResult>> {
    let mut out = Vec::new();
    for token in tokens {
        let prefixes = segment_prefixes(token)?;
        for (i, prefix) in prefixes.iter().enumerate() {
            let k = i + 1;
            let padded = pad_features(prefix, config.min_frames());
            let emb = embed_speech(&padded.frames, params, config).map_err(|e| {
                Error::numeric(format!("token {} prefix {k}: {e}", token.utterance_id))
            })?;
            let p = precision_at_10(&emb, store, relevance, &token.word)?;
            let (first, last) = decile_bins(token.n_phones(), k)?;
            out.push(GatingResult {
                utterance_id: token.utterance_id.clone(),
                word: token.word.clone(),
                speaker_id: token.speaker_id.clone(),
                prefix_len: k,
                n_phones: token.n_phones(),
                prefix_frames: prefix.n_frames(),
                p_at_10: p,
                first_decile: first,
                last_decile: last,
            });
        }
    }
    Ok(out)
}

/// Mean P@10 per (word, decile): each result fills columns
/// first_decile..=last_decile. Returns words (sorted) and a 10-wide row per
/// word. Because the bins partition the axis, every cell of a word with at
/// least one token is populated.
pub fn gating_heatmap(results: &[GatingResult]) -> Vec<(String, [f64; 10])> {
    let mut sums: BTreeMap<String, ([f64; 10], [usize; 10])> = BTreeMap::new();
    for r in results {
        let entry = sums.entry(r.word.clone()).or_insert(([0.0; 10], [0; 10]));
        for d in r.first_decile..=r.last_decile {
            entry.0[d - 1] += r.p_at_10;
            entry.1[d - 1] += 1;
        }
    }
    sums.into_iter()
        .map(|(word, (sum, count))| {
            let mut row = [0.0; 10];
            for i in 0..10 {
                if count[i] > 0 {
                    row[i] = sum[i] / count[i] as f64;
                }
            }
            (word, row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn features(n: usize) -> FeatureSequence {
        FeatureSequence {
            frames: (0..n).map(|t| vec![t as f64; 3]).collect(),
            frame_shift: 0.01,
            source_id: "tok".into(),
        }
    }

    fn bike_token() -> WordToken {
        WordToken {
            utterance_id: "utt1".into(),
            word: "bike".into(),
            speaker_id: "spk1".into(),
            features: features(40),
            alignment: vec![
                ("B".into(), 0, 10),
                ("AY".into(), 10, 25),
                ("K".into(), 25, 40),
            ],
        }
    }

    #[test]
    fn bike_segments_into_three_nested_prefixes() {
        let token = bike_token();
        let prefixes = segment_prefixes(&token).unwrap();
        assert_eq!(prefixes.len(), 3);
        assert_eq!(prefixes[0].n_frames(), 10);
        assert_eq!(prefixes[1].n_frames(), 25);
        assert_eq!(prefixes[2].n_frames(), 40);
        // Each prefix is a strict prefix of the next.
        for k in 0..2 {
            assert_eq!(
                prefixes[k].frames[..],
                prefixes[k + 1].frames[..prefixes[k].n_frames()]
            );
        }
    }

    #[test]
    fn one_phone_word_yields_one_full_prefix() {
        let token = WordToken {
            utterance_id: "utt2".into(),
            word: "a".into(),
            speaker_id: "s".into(),
            features: features(7),
            alignment: vec![("AH".into(), 0, 7)],
        };
        let prefixes = segment_prefixes(&token).unwrap();
        assert_eq!(prefixes.len(), 1);
        assert_eq!(prefixes[0].frames, token.features.frames);
    }

    #[test]
    fn malformed_alignment_is_ingest_error() {
        let mut token = bike_token();
        token.alignment[1].1 = 12; // gap after phone 1
        assert!(matches!(segment_prefixes(&token), Err(Error::Ingest(_))));

        let mut token2 = bike_token();
        token2.alignment[2].2 = 99; // beyond feature length
        assert!(matches!(segment_prefixes(&token2), Err(Error::Ingest(_))));
    }

    #[test]
    fn decile_bins_two_phones_split_at_half() {
        assert_eq!(decile_bins(2, 1).unwrap(), (1, 5));
        assert_eq!(decile_bins(2, 2).unwrap(), (6, 10));
    }

    #[test]
    fn decile_bins_examples() {
        assert_eq!(decile_bins(10, 3).unwrap(), (3, 3));
        assert_eq!(decile_bins(3, 1).unwrap(), (1, 3));
        assert_eq!(decile_bins(3, 2).unwrap(), (4, 6));
        assert_eq!(decile_bins(3, 3).unwrap(), (7, 10));
    }

    #[test]
    fn decile_bins_partition_one_through_ten() {
        for n in 1..=12 {
            let mut covered = [false; 10];
            let mut prev_last = 0;
            for k in 1..=n {
                let (first, last) = decile_bins(n, k).unwrap();
                assert_eq!(first, prev_last + 1, "n={n} k={k}: gap or overlap");
                for d in first..=last {
                    assert!(!covered[d - 1], "n={n} k={k}: decile {d} covered twice");
                    covered[d - 1] = true;
                }
                prev_last = last;
            }
            assert!(covered.iter().all(|&c| c), "n={n}: deciles not all covered");
        }
    }

    #[test]
    fn decile_bins_out_of_range_rejected() {
        assert!(decile_bins(3, 0).is_err());
        assert!(decile_bins(3, 4).is_err());
        assert!(decile_bins(0, 1).is_err());
    }

    #[test]
    fn parse_alignment_groups_consecutive_rows() {
        let text = "utterance_id,word,speaker_id,phone,start_frame,end_frame\n\
                    u1,bike,s1,B,0,10\n\
                    u1,bike,s1,AY,10,25\n\
                    u1,bike,s1,K,25,40\n\
                    u2,man,s2,M,0,8\n\
                    u2,man,s2,AE,8,15\n\
                    u2,man,s2,N,15,21\n";
        let specs = parse_alignment(text).unwrap();
        assert_eq!(specs.len(), 2);
        assert_eq!(specs[0].word, "bike");
        assert_eq!(specs[0].alignment.len(), 3);
        assert_eq!(specs[1].utterance_id, "u2");
    }

    #[test]
    fn parse_alignment_rejects_inconsistent_groups() {
        let text = "u1,bike,s1,B,0,10\nu1,bird,s1,ER,10,20\n";
        assert!(matches!(parse_alignment(text), Err(Error::Ingest(_))));
    }

    #[test]
    fn padding_extends_short_prefixes_with_zero_frames() {
        let seq = features(3);
        let padded = pad_features(&seq, 6);
        assert_eq!(padded.n_frames(), 6);
        assert_eq!(padded.frames[..3], seq.frames[..]);
        assert!(padded.frames[3..]
            .iter()
            .all(|f| f.iter().all(|&v| v == 0.0)));
        // Already long enough: unchanged.
        assert_eq!(pad_features(&seq, 2).frames, seq.frames);
    }

    #[test]
    fn heatmap_averages_into_covered_deciles() {
        let mk = |word: &str, k: usize, n: usize, p: f64| {
            let (first, last) = decile_bins(n, k).unwrap();
            GatingResult {
                utterance_id: format!("{word}{k}"),
                word: word.into(),
                speaker_id: "s".into(),
                prefix_len: k,
                n_phones: n,
                prefix_frames: 5 * k,
                p_at_10: p,
                first_decile: first,
                last_decile: last,
            }
        };
        // Two tokens of a 2-phone word: k=1 fills deciles 1-5, k=2 fills 6-10.
        let results = vec![
            mk("cow", 1, 2, 0.2),
            mk("cow", 2, 2, 0.8),
            mk("cow", 1, 2, 0.4),
            mk("cow", 2, 2, 1.0),
        ];
        let heat = gating_heatmap(&results);
        assert_eq!(heat.len(), 1);
        let (word, row) = &heat[0];
        assert_eq!(word, "cow");
        for d in 0..5 {
            assert!((row[d] - 0.3).abs() < 1e-12);
        }
        for d in 5..10 {
            assert!((row[d] - 0.9).abs() < 1e-12);
        }
    }
}
