use std::collections::HashMap;

use crate::corpus::Dialogue;

use super::tokenize;

/// Token ↔ id map. Ids are dense and ordered by descending frequency, ties
/// broken lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
    min_count: u64,
}

impl Vocabulary {
    /// Builds from raw frequencies. `min_count` below 1 is treated as 1.
    pub fn from_counts(counts: HashMap<String, u64>, min_count: u64) -> Self {
        let min_count = min_count.max(1);
        let mut kept: Vec<(String, u64)> =
            counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_ordered(kept, min_count)
    }

    /// Builds from an already ordered `(token, count)` list, keeping its order.
    pub(crate) fn from_ordered(entries: Vec<(String, u64)>, min_count: u64) -> Self {
        let mut tokens = Vec::with_capacity(entries.len());
        let mut freq = Vec::with_capacity(entries.len());
        let mut index = HashMap::with_capacity(entries.len());
        for (i, (t, c)) in entries.into_iter().enumerate() {
            index.insert(t.clone(), i as u32);
            tokens.push(t);
            freq.push(c);
        }
        Vocabulary {
            tokens,
            counts: freq,
            index,
            min_count,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        tokenize(text)
            .iter()
            .filter_map(|t| self.id(t))
            .collect()
    }
}

/// Counts tokens over every turn of every dialogue.
pub fn build_vocab(corpus: &[Dialogue], min_count: u64) -> Vocabulary {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for d in corpus {
        for t in d.turns() {
            for tok in tokenize(&t.text) {
                *counts.entry(tok).or_default() += 1;
            }
        }
    }
    Vocabulary::from_counts(counts, min_count)
}
