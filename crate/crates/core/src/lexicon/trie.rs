//! Prefix trie over phoneme sequences with pass-through counts.

use std::collections::BTreeMap;

/// Each node counts the lexicon words whose transcription passes through it
/// (including words that end there), so a prefix lookup is a single walk.
#[derive(Debug, Default)]
pub struct PhonTrie {
    root: TrieNode,
}

#[derive(Debug, Default)]
struct TrieNode {
    children: BTreeMap<u32, TrieNode>,
    pass_count: usize,
    end_count: usize,
}

impl PhonTrie {
    pub fn new() -> PhonTrie {
        PhonTrie::default()
    }

    pub fn insert(&mut self, phones: &[u32]) {
        let mut node = &mut self.root;
        node.pass_count += 1;
        for &p in phones {
            node = node.children.entry(p).or_default();
            node.pass_count += 1;
        }
        node.end_count += 1;
    }

    /// Number of inserted sequences that begin with `prefix`. The empty
    /// prefix counts the whole vocabulary.
    pub fn prefix_count(&self, prefix: &[u32]) -> usize {
        let mut node = &self.root;
        for p in prefix {
            match node.children.get(p) {
                Some(child) => node = child,
                None => return 0,
            }
        }
        node.pass_count
    }

    pub fn vocabulary_size(&self) -> usize {
        self.root.pass_count
    }

    /// Structural invariant: every node's pass count equals the sum of its
    /// children's plus the words ending at it.
    #[cfg(test)]
    fn check_counts(node: &TrieNode) -> bool {
        let child_sum: usize = node.children.values().map(|c| c.pass_count).sum();
        node.pass_count == child_sum + node.end_count
            && node.children.values().all(Self::check_counts)
    }

    #[cfg(test)]
    pub fn counts_consistent(&self) -> bool {
        Self::check_counts(&self.root)
    }
}
