//! Phonemic lexicon with word-competition statistics.
//!
//! The lexicon file is UTF-8 text, one entry per line:
//! `word<TAB>frequency<TAB>PH1 PH2 ...`
//! with `#`-prefixed lines ignored. Phones are ARPAbet-style uppercase
//! symbols; the phone set is whatever the file declares. Homophones (same
//! transcription, different orthography) are distinct lexicon words.
//!
//! Two competition measures are exposed:
//! - the word-initial cohort: how many lexicon words start with a given
//!   phoneme prefix (the target word itself included when present);
//! - the neighborhood density: how many lexicon words can be formed from a
//!   phoneme sequence by exactly one substitution (same length, Hamming
//!   distance 1 — no insertions or deletions).

pub mod trie;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::error::{Error, Result};
pub use trie::PhonTrie;

#[derive(Debug, Clone)]
pub struct LexiconEntry {
    pub word: String,
    pub frequency: u64,
    pub phones: Vec<u32>,
}

#[derive(Debug)]
pub struct Lexicon {
    entries: Vec<LexiconEntry>,
    by_word: BTreeMap<String, usize>,
    phone_ids: BTreeMap<String, u32>,
    phone_names: Vec<String>,
    trie: PhonTrie,
    /// (length, position, sequence with that position blanked) -> count.
    substitution_buckets: HashMap<(usize, usize, Vec<u32>), usize>,
    /// Transcription -> number of words carrying it (homophone handling).
    exact_counts: HashMap<Vec<u32>, usize>,
}

impl Lexicon {
    pub fn from_entries(raw: Vec<(String, u64, Vec<String>)>) -> Result<Lexicon> {
        let mut phone_ids = BTreeMap::new();
        let mut phone_names = Vec::new();
        let mut entries = Vec::with_capacity(raw.len());
        let mut by_word = BTreeMap::new();

        for (word, frequency, phones) in raw {
            if phones.is_empty() {
                return Err(Error::ingest(format!(
                    "lexicon word '{word}' has an empty transcription"
                )));
            }
            let ids: Vec<u32> = phones
                .iter()
                .map(|p| {
                    *phone_ids.entry(p.clone()).or_insert_with(|| {
                        phone_names.push(p.clone());
                        (phone_names.len() - 1) as u32
                    })
                })
                .collect();
            if by_word.contains_key(&word) {
                return Err(Error::ingest(format!("duplicate lexicon word '{word}'")));
            }
            by_word.insert(word.clone(), entries.len());
            entries.push(LexiconEntry {
                word,
                frequency,
                phones: ids,
            });
        }
        if entries.is_empty() {
            return Err(Error::ingest("empty lexicon"));
        }

        let mut trie = PhonTrie::new();
        let mut substitution_buckets = HashMap::new();
        let mut exact_counts = HashMap::new();
        for e in &entries {
            trie.insert(&e.phones);
            *exact_counts.entry(e.phones.clone()).or_insert(0) += 1;
            for pos in 0..e.phones.len() {
                let mut key = e.phones.clone();
                key[pos] = u32::MAX;
                *substitution_buckets
                    .entry((e.phones.len(), pos, key))
                    .or_insert(0) += 1;
            }
        }

        Ok(Lexicon {
            entries,
            by_word,
            phone_ids,
            phone_names,
            trie,
            substitution_buckets,
            exact_counts,
        })
    }

    /// Parse the tab-separated lexicon format.
    pub fn parse(text: &str) -> Result<Lexicon> {
        let mut raw = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(3, '\t');
            let word = parts
                .next()
                .filter(|w| !w.is_empty())
                .ok_or_else(|| Error::ingest(format!("line {}: missing word", lineno + 1)))?;
            let freq: u64 = parts
                .next()
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| {
                    Error::ingest(format!("line {}: missing or bad frequency", lineno + 1))
                })?;
            let phones: Vec<String> = parts
                .next()
                .unwrap_or("")
                .split_whitespace()
                .map(str::to_string)
                .collect();
            if phones.is_empty() {
                return Err(Error::ingest(format!(
                    "line {}: no phones for '{word}'",
                    lineno + 1
                )));
            }
            raw.push((word.to_string(), freq, phones));
        }
        Lexicon::from_entries(raw)
    }

    pub fn load(path: &Path) -> Result<Lexicon> {
        let text = std::fs::read_to_string(path)?;
        Lexicon::parse(&text).map_err(|e| match e {
            Error::Ingest(msg) => Error::ingest(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.word.as_str())
    }

    pub fn entry(&self, word: &str) -> Option<&LexiconEntry> {
        self.by_word.get(word).map(|&i| &self.entries[i])
    }

    pub fn frequency(&self, word: &str) -> Result<u64> {
        self.entry(word)
            .map(|e| e.frequency)
            .ok_or_else(|| Error::not_found(format!("word '{word}' not in lexicon")))
    }

    pub fn phone_name(&self, id: u32) -> &str {
        &self.phone_names[id as usize]
    }

    pub fn phones_of(&self, word: &str) -> Result<Vec<String>> {
        let e = self
            .entry(word)
            .ok_or_else(|| Error::not_found(format!("word '{word}' not in lexicon")))?;
        Ok(e.phones
            .iter()
            .map(|&p| self.phone_names[p as usize].clone())
            .collect())
    }

    fn encode(&self, phones: &[String]) -> Result<Vec<u32>> {
        phones
            .iter()
            .map(|p| {
                self.phone_ids
                    .get(p)
                    .copied()
                    .ok_or_else(|| Error::contract(format!("unknown phone symbol '{p}'")))
            })
            .collect()
    }

    /// Word-initial cohort: number of lexicon words whose transcription
    /// begins with `prefix`, the target word included when present. The
    /// empty prefix returns the vocabulary size.
    pub fn cohort_size(&self, prefix: &[String]) -> Result<usize> {
        let ids = self.encode(prefix)?;
        Ok(self.trie.prefix_count(&ids))
    }

    /// Cohort with the named target word excluded, for callers that prefer
    /// counting only the competitors.
    pub fn cohort_size_excluding(&self, prefix: &[String], target: &str) -> Result<usize> {
        let count = self.cohort_size(prefix)?;
        let target_entry = self
            .entry(target)
            .ok_or_else(|| Error::not_found(format!("word '{target}' not in lexicon")))?;
        let prefix_ids = self.encode(prefix)?;
        let starts_with = target_entry.phones.len() >= prefix_ids.len()
            && target_entry.phones[..prefix_ids.len()] == prefix_ids[..];
        Ok(count - usize::from(starts_with))
    }

    /// Number of lexicon words at Hamming distance exactly 1 from `phones`
    /// (equal length, one substitution). Words whose transcription equals
    /// `phones` — the sequence itself or homophones — are at distance 0 and
    /// therefore not counted.
    pub fn density_of_sequence(&self, phones: &[String]) -> Result<usize> {
        let ids = self.encode(phones)?;
        let exact = self.exact_counts.get(&ids).copied().unwrap_or(0);
        let mut total = 0;
        for pos in 0..ids.len() {
            let mut key = ids.clone();
            key[pos] = u32::MAX;
            total += self
                .substitution_buckets
                .get(&(ids.len(), pos, key))
                .copied()
                .unwrap_or(0);
        }
        // Exact-match words were counted once per position.
        Ok(total - exact * ids.len())
    }

    /// Neighborhood density of a lexicon word: other words of equal length
    /// differing in exactly one phoneme position.
    pub fn neighborhood_density(&self, word: &str) -> Result<usize> {
        let e = self
            .entry(word)
            .ok_or_else(|| Error::not_found(format!("word '{word}' not in lexicon")))?;
        let phones: Vec<String> = e
            .phones
            .iter()
            .map(|&p| self.phone_names[p as usize].clone())
            .collect();
        self.density_of_sequence(&phones)
    }
}

/// Phonemes per frame of one spoken token.
pub fn speaking_rate(n_phones: usize, n_frames: usize) -> Result<f64> {
    if n_phones == 0 {
        return Err(Error::degenerate("speaking_rate: token has no phones"));
    }
    if n_frames == 0 {
        return Err(Error::degenerate("speaking_rate: zero-duration token"));
    }
    Ok(n_phones as f64 / n_frames as f64)
}
