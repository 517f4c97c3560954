//! Embedding store and exact cosine-similarity retrieval with the
//! evaluation metrics used throughout: Recall@N, median rank, and
//! Precision@10.
//!
//! Stores are exhaustive (no approximate index): rows are unit-norm, so
//! cosine similarity is a dot product over a contiguous matrix. Ties in
//! similarity are broken by ascending item id, which makes every metric
//! invariant to store insertion order.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoders::EmbeddingVector;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"VGSE";

/// Immutable collection of unit-norm embeddings with string ids and
/// optional per-item metadata (the caption words of an image, for
/// relevance derivation).
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    ids: Vec<String>,
    dim: usize,
    matrix: Vec<f64>,
    metadata: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StoreHeader {
    n: usize,
    d: usize,
    ids: Vec<String>,
    #[serde(default)]
    metadata: BTreeMap<String, Vec<String>>,
}

impl EmbeddingStore {
    pub fn new(
        entries: Vec<(String, EmbeddingVector)>,
        metadata: BTreeMap<String, Vec<String>>,
    ) -> Result<EmbeddingStore> {
        if entries.is_empty() {
            return Err(Error::degenerate("embedding store: no entries"));
        }
        let dim = entries[0].1.dim();
        let mut seen = BTreeSet::new();
        let mut ids = Vec::with_capacity(entries.len());
        let mut matrix = Vec::with_capacity(entries.len() * dim);
        for (id, emb) in entries {
            if emb.dim() != dim {
                return Err(Error::contract(format!(
                    "embedding store: id '{id}' has dim {} != {dim}",
                    emb.dim()
                )));
            }
            if !seen.insert(id.clone()) {
                return Err(Error::contract(format!("embedding store: duplicate id '{id}'")));
            }
            matrix.extend_from_slice(emb.values());
            ids.push(id);
        }
        for id in metadata.keys() {
            if !seen.contains(id) {
                return Err(Error::contract(format!(
                    "embedding store: metadata for unknown id '{id}'"
                )));
            }
        }
        Ok(EmbeddingStore {
            ids,
            dim,
            matrix,
            metadata,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn metadata(&self) -> &BTreeMap<String, Vec<String>> {
        &self.metadata
    }

    pub fn row(&self, idx: usize) -> &[f64] {
        &self.matrix[idx * self.dim..(idx + 1) * self.dim]
    }

    /// The idx-th entry as an embedding vector.
    pub fn embedding(&self, idx: usize) -> EmbeddingVector {
        EmbeddingVector::new(self.row(idx).to_vec()).expect("store rows are unit norm")
    }

    fn similarities(&self, query: &EmbeddingVector) -> Result<Vec<f64>> {
        if query.dim() != self.dim {
            return Err(Error::contract(format!(
                "query dim {} != store dim {}",
                query.dim(),
                self.dim
            )));
        }
        let q = query.values();
        Ok((0..self.len())
            .map(|i| {
                let row = &self.matrix[i * self.dim..(i + 1) * self.dim];
                row.iter().zip(q).map(|(a, b)| a * b).sum()
            })
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = StoreHeader {
            n: self.len(),
            d: self.dim,
            ids: self.ids.clone(),
            metadata: self.metadata.clone(),
        };
        let header_bytes = serde_json::to_vec(&header)
            .map_err(|e| Error::ingest(format!("store header encode: {e}")))?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(&header_bytes);
        for v in &self.matrix {
            out.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::File::create(path)?.write_all(&out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<EmbeddingStore> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 8 || &bytes[0..4] != MAGIC {
            return Err(Error::ingest(format!(
                "{}: not an embedding store",
                path.display()
            )));
        }
        let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        if bytes.len() < 8 + hlen {
            return Err(Error::ingest(format!("{}: truncated header", path.display())));
        }
        let header: StoreHeader = serde_json::from_slice(&bytes[8..8 + hlen])
            .map_err(|e| Error::ingest(format!("{}: bad header: {e}", path.display())))?;
        let expected = 8 + hlen + header.n * header.d * 8;
        if bytes.len() != expected || header.ids.len() != header.n {
            return Err(Error::ingest(format!(
                "{}: inconsistent store layout",
                path.display()
            )));
        }
        let values: Vec<f64> = bytes[8 + hlen..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut entries = Vec::with_capacity(header.n);
        for (i, id) in header.ids.into_iter().enumerate() {
            let row = values[i * header.d..(i + 1) * header.d].to_vec();
            let emb = EmbeddingVector::new(row)
                .map_err(|e| Error::ingest(format!("{}: row '{id}': {e}", path.display())))?;
            entries.push((id, emb));
        }
        EmbeddingStore::new(entries, header.metadata)
    }
}

/// Rank the `k` most similar items: descending similarity, ties broken by
/// ascending item id.
pub fn rank_items(
    query: &EmbeddingVector,
    store: &EmbeddingStore,
    k: usize,
) -> Result<Vec<(String, f64)>> {
    if store.is_empty() {
        return Err(Error::degenerate("rank_items: empty store"));
    }
    let sims = store.similarities(query)?;
    let mut order: Vec<usize> = (0..store.len()).collect();
    order.sort_by(|&a, &b| {
        sims[b]
            .partial_cmp(&sims[a])
            .expect("finite similarities")
            .then_with(|| store.ids[a].cmp(&store.ids[b]))
    });
    Ok(order
        .into_iter()
        .take(k)
        .map(|i| (store.ids[i].clone(), sims[i]))
        .collect())
}

/// 1-based rank of `target_id` in the full ordering for `query`.
pub fn rank_of(query: &EmbeddingVector, store: &EmbeddingStore, target_id: &str) -> Result<usize> {
    if store.is_empty() {
        return Err(Error::degenerate("rank_of: empty store"));
    }
    let sims = store.similarities(query)?;
    let target_idx = store
        .ids
        .iter()
        .position(|id| id == target_id)
        .ok_or_else(|| Error::contract(format!("rank_of: id '{target_id}' not in store")))?;
    let ts = sims[target_idx];
    let mut rank = 1;
    for (i, &sim) in sims.iter().enumerate() {
        if i == target_idx {
            continue;
        }
        if sim > ts || (sim == ts && store.ids[i] < store.ids[target_idx]) {
            rank += 1;
        }
    }
    Ok(rank)
}

/// Recall@N over 1-based ranks of each query's single correct item, as a
/// percentage.
pub fn recall_at_n(ranks: &[usize], n: usize) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::degenerate("recall_at_n: no queries"));
    }
    if ranks.contains(&0) {
        return Err(Error::contract("recall_at_n: ranks are 1-based"));
    }
    let hits = ranks.iter().filter(|&&r| r <= n).count();
    Ok(100.0 * hits as f64 / ranks.len() as f64)
}

/// Median of the correct-item ranks; the lower-middle element for even
/// counts.
pub fn median_rank(ranks: &[usize]) -> Result<usize> {
    if ranks.is_empty() {
        return Err(Error::degenerate("median_rank: no queries"));
    }
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    Ok(sorted[(sorted.len() - 1) / 2])
}

/// Word -> image ids containing that word's visual referent.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RelevanceMap {
    pub map: BTreeMap<String, BTreeSet<String>>,
}

impl RelevanceMap {
    /// Derive relevance from store metadata: an item is relevant to a word
    /// when the word occurs among the item's (case-folded) caption words.
    pub fn from_store_metadata(store: &EmbeddingStore, wordlist: &[String]) -> RelevanceMap {
        let mut map: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for word in wordlist {
            let folded = word.to_lowercase();
            let ids: BTreeSet<String> = store
                .metadata()
                .iter()
                .filter(|(_, words)| words.iter().any(|w| w.to_lowercase() == folded))
                .map(|(id, _)| id.clone())
                .collect();
            map.insert(folded, ids);
        }
        RelevanceMap { map }
    }

    pub fn relevant(&self, word: &str) -> Option<&BTreeSet<String>> {
        self.map.get(&word.to_lowercase())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.map)
            .map_err(|e| Error::ingest(format!("relevance encode: {e}")))?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RelevanceMap> {
        let text = std::fs::read_to_string(path)?;
        let map = serde_json::from_str(&text)
            .map_err(|e| Error::ingest(format!("{}: {e}", path.display())))?;
        Ok(RelevanceMap { map })
    }

    pub fn validate_against(&self, store: &EmbeddingStore) -> Result<()> {
        let ids: BTreeSet<&String> = store.ids().iter().collect();
        for (word, set) in &self.map {
            for id in set {
                if !ids.contains(id) {
                    return Err(Error::contract(format!(
                        "relevance for '{word}' references unknown image '{id}'"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Fraction of the ten most similar images that contain the word's visual
/// referent.
pub fn precision_at_10(
    query: &EmbeddingVector,
    store: &EmbeddingStore,
    relevance: &RelevanceMap,
    word: &str,
) -> Result<f64> {
    if store.len() < 10 {
        return Err(Error::contract(format!(
            "precision_at_10: store has {} items, need at least 10",
            store.len()
        )));
    }
    let empty = BTreeSet::new();
    let relevant = relevance.relevant(word).unwrap_or(&empty);
    let top = rank_items(query, store, 10)?;
    let hits = top.iter().filter(|(id, _)| relevant.contains(id)).count();
    Ok(hits as f64 / 10.0)
}

/// Histogram of scores over the ten bins [0, 0.1), [0.1, 0.2), ...,
/// [0.9, 1.0]; the final bin is closed so a score of exactly 1 lands in
/// bin 10.
pub fn p10_histogram(values: &[f64]) -> [usize; 10] {
    let mut bins = [0usize; 10];
    for &v in values {
        let idx = ((v * 10.0).floor() as usize).min(9);
        bins[idx] += 1;
    }
    bins
}
