//! Analysis-table assembly: join retrieval results with lexical and
//! acoustic covariates into one observation row per token (word
//! recognition) or per (token, prefix) (gating).
//!
//! For gating rows the competition measures describe the phoneme sequence
//! actually presented: `n_phonemes`, `n_vowels`, `n_consonants`,
//! `cohort_size` and `neighborhood_density` are computed on the prefix,
//! `signal_duration` and `speaking_rate` on the prefix frames; the total
//! length of the source word is carried in `word_n_phonemes`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::gating::{GatingResult, WordRecognitionResult, WordToken};
use crate::ingest::phoneclass::PhoneClasses;
use crate::lexicon::{speaking_rate, Lexicon};
use crate::stats::AnalysisTable;

pub const WORD_TABLE_COLUMNS: [&str; 12] = [
    "token_id",
    "word_id",
    "speaker_id",
    "p_at_10",
    "signal_duration",
    "speaking_rate",
    "train_frequency",
    "n_phonemes",
    "n_vowels",
    "n_consonants",
    "cohort_size",
    "neighborhood_density",
];

pub const GATING_TABLE_COLUMNS: [&str; 14] = [
    "token_id",
    "word_id",
    "speaker_id",
    "prefix_len",
    "p_at_10",
    "signal_duration",
    "speaking_rate",
    "train_frequency",
    "n_phonemes",
    "word_n_phonemes",
    "n_vowels",
    "n_consonants",
    "cohort_size",
    "neighborhood_density",
];

fn token_index(tokens: &[WordToken]) -> BTreeMap<&str, &WordToken> {
    tokens
        .iter()
        .map(|t| (t.utterance_id.as_str(), t))
        .collect()
}

fn missing_tokens_error(missing: &[String]) -> Error {
    Error::ingest(format!(
        "{} result ids missing from the token set: {}",
        missing.len(),
        missing
            .iter()
            .take(8)
            .cloned()
            .collect::<Vec<_>>()
            .join(", ")
    ))
}

/// Experiment-1 table: one row per word token. `cohort_excludes_target`
/// drops the target word itself from its cohort counts.
pub fn assemble_word_table(
    results: &[WordRecognitionResult],
    tokens: &[WordToken],
    lexicon: &Lexicon,
    classes: &PhoneClasses,
    cohort_excludes_target: bool,
) -> Result<AnalysisTable> {
    let index = token_index(tokens);
    let missing: Vec<String> = results
        .iter()
        .filter(|r| !index.contains_key(r.utterance_id.as_str()))
        .map(|r| r.utterance_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(missing_tokens_error(&missing));
    }

    let mut table =
        AnalysisTable::new(WORD_TABLE_COLUMNS.iter().map(|s| s.to_string()).collect());
    for r in results {
        let token = index[r.utterance_id.as_str()];
        let phones = token.phones();
        let (vowels, consonants) = classes.counts(&phones)?;
        let freq = lexicon.frequency(&r.word)?;
        let cohort = if cohort_excludes_target {
            lexicon.cohort_size_excluding(&phones, &r.word)?
        } else {
            lexicon.cohort_size(&phones)?
        };
        let density = lexicon.density_of_sequence(&phones)?;
        let rate = speaking_rate(phones.len(), token.n_frames())?;
        table.push_row(vec![
            r.utterance_id.clone(),
            r.word.clone(),
            r.speaker_id.clone(),
            r.p_at_10.to_string(),
            token.n_frames().to_string(),
            rate.to_string(),
            freq.to_string(),
            phones.len().to_string(),
            vowels.to_string(),
            consonants.to_string(),
            cohort.to_string(),
            density.to_string(),
        ])?;
    }
    Ok(table)
}

/// Experiment-2 table: one row per (token, prefix length).
pub fn assemble_gating_table(
    results: &[GatingResult],
    tokens: &[WordToken],
    lexicon: &Lexicon,
    classes: &PhoneClasses,
    cohort_excludes_target: bool,
) -> Result<AnalysisTable> {
    let index = token_index(tokens);
    let missing: Vec<String> = results
        .iter()
        .filter(|r| !index.contains_key(r.utterance_id.as_str()))
        .map(|r| r.utterance_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(missing_tokens_error(&missing));
    }

    let mut table =
        AnalysisTable::new(GATING_TABLE_COLUMNS.iter().map(|s| s.to_string()).collect());
    for r in results {
        let token = index[r.utterance_id.as_str()];
        let phones = token.phones();
        if r.prefix_len == 0 || r.prefix_len > phones.len() {
            return Err(Error::ingest(format!(
                "token {}: prefix length {} out of range",
                r.utterance_id, r.prefix_len
            )));
        }
        let prefix = &phones[..r.prefix_len];
        let (vowels, consonants) = classes.counts(prefix)?;
        let freq = lexicon.frequency(&r.word)?;
        let cohort = if cohort_excludes_target {
            lexicon.cohort_size_excluding(prefix, &r.word)?
        } else {
            lexicon.cohort_size(prefix)?
        };
        let density = lexicon.density_of_sequence(prefix)?;
        let rate = speaking_rate(r.prefix_len, r.prefix_frames)?;
        table.push_row(vec![
            r.utterance_id.clone(),
            r.word.clone(),
            r.speaker_id.clone(),
            r.prefix_len.to_string(),
            r.p_at_10.to_string(),
            r.prefix_frames.to_string(),
            rate.to_string(),
            freq.to_string(),
            r.prefix_len.to_string(),
            phones.len().to_string(),
            vowels.to_string(),
            consonants.to_string(),
            cohort.to_string(),
            density.to_string(),
        ])?;
    }
    Ok(table)
}
