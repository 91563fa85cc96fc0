//! Word n-gram language model with interpolated absolute discounting.
//!
//! `P(w | h) = max(c(h,w) − D, 0) / c(h) + D · N₁₊(h·) / c(h) · P(w | h')`
//! where `h'` drops the oldest history token. The recursion bottoms out in a
//! uniform distribution over the predictable vocabulary (all words plus
//! `</s>`), so every token, known or not, has non-zero probability.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::textenc::tokenize;

use super::RespondError;

pub const BOS: u32 = 0;
pub const EOS: u32 = 1;
const BOS_TOKEN: &str = "<s>";
const EOS_TOKEN: &str = "</s>";
/// Id used for out-of-vocabulary tokens; never present in any table.
const UNKNOWN: u32 = u32::MAX;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct HistoryStats {
    total: u64,
    next: BTreeMap<u32, u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramLM {
    order: usize,
    discount: f64,
    words: Vec<String>,
    index: HashMap<String, u32>,
    /// `tables[k]` maps histories of length `k` to continuation counts.
    tables: Vec<HashMap<Vec<u32>, HistoryStats>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogProb {
    /// Natural-log probability of the tokens plus `</s>`.
    pub total: f64,
    pub per_token: f64,
    /// Scored positions, `</s>` included.
    pub tokens: usize,
}

impl NGramLM {
    pub fn new(order: usize, discount: f64) -> Result<Self, RespondError> {
        if order == 0 {
            return Err(RespondError::Config("order must be >= 1".into()));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(RespondError::Config("discount must be in (0, 1)".into()));
        }
        let words = vec![BOS_TOKEN.to_string(), EOS_TOKEN.to_string()];
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Ok(NGramLM {
            order,
            discount,
            words,
            index,
            tables: vec![HashMap::new(); order],
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Ids that can be predicted: `</s>` and every word.
    pub fn predictable(&self) -> impl Iterator<Item = u32> {
        EOS..self.words.len() as u32
    }

    pub fn predictable_len(&self) -> usize {
        self.words.len() - 1
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    fn intern(&mut self, token: String) -> u32 {
        if let Some(&id) = self.index.get(&token) {
            return id;
        }
        let id = self.words.len() as u32;
        self.index.insert(token.clone(), id);
        self.words.push(token);
        id
    }

    pub fn add_sentence(&mut self, text: &str) {
        let ids: Vec<u32> = tokenize(text).into_iter().map(|t| self.intern(t)).collect();
        let mut padded = vec![BOS; self.order - 1];
        padded.extend(ids);
        padded.push(EOS);
        for i in self.order - 1..padded.len() {
            let target = padded[i];
            for h in 0..self.order {
                let stats = self.tables[h].entry(padded[i - h..i].to_vec()).or_default();
                stats.total += 1;
                *stats.next.entry(target).or_default() += 1;
            }
        }
    }

    /// Raw count of `history` followed by `next`.
    pub fn count(&self, history: &[u32], next: u32) -> u64 {
        self.tables
            .get(history.len())
            .and_then(|t| t.get(history))
            .and_then(|s| s.next.get(&next))
            .copied()
            .unwrap_or(0)
    }

    /// Every stored `(history, next, count)`, for inspection.
    pub fn ngrams(&self) -> Vec<(Vec<u32>, u32, u64)> {
        let mut out: Vec<(Vec<u32>, u32, u64)> = self
            .tables
            .iter()
            .flat_map(|t| {
                t.iter()
                    .flat_map(|(h, s)| s.next.iter().map(move |(&w, &c)| (h.clone(), w, c)))
            })
            .collect();
        out.sort();
        out
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        tokenize(text)
            .iter()
            .map(|t| self.id(t).filter(|&id| id > EOS).unwrap_or(UNKNOWN))
            .collect()
    }

    /// `P(next | history)`; only the last `order − 1` history tokens matter.
    pub fn prob(&self, history: &[u32], next: u32) -> f64 {
        let keep = history.len().min(self.order - 1);
        let history = &history[history.len() - keep..];
        let mut p = 1.0 / self.predictable_len() as f64;
        for h in 0..=keep {
            let hist = &history[keep - h..];
            if let Some(s) = self.tables[h].get(hist) {
                if s.total > 0 {
                    let total = s.total as f64;
                    let c = s.next.get(&next).copied().unwrap_or(0) as f64;
                    let backoff = self.discount * s.next.len() as f64 / total;
                    p = (c - self.discount).max(0.0) / total + backoff * p;
                }
            }
        }
        p
    }

    /// Distribution over [`NGramLM::predictable`] ids, in id order.
    pub fn distribution(&self, history: &[u32]) -> Vec<f64> {
        self.predictable().map(|w| self.prob(history, w)).collect()
    }

    fn history_for(&self, context: &[u32]) -> Vec<u32> {
        let need = self.order - 1;
        let mut h = vec![BOS; need.saturating_sub(context.len())];
        h.extend_from_slice(&context[context.len().saturating_sub(need)..]);
        h
    }

    pub(crate) fn start_history(&self, context_text: &str) -> Vec<u32> {
        self.history_for(&self.encode(context_text))
    }

    pub fn logprob(&self, text: &str) -> LogProb {
        let mut ids = self.encode(text);
        ids.push(EOS);
        let mut history = vec![BOS; self.order - 1];
        let mut total = 0.0;
        for &w in &ids {
            total += self.prob(&history, w).ln();
            if self.order > 1 {
                history.remove(0);
                history.push(w);
            }
        }
        LogProb {
            total,
            per_token: total / ids.len() as f64,
            tokens: ids.len(),
        }
    }
}

/// Trains on each text as one sentence with boundary markers.
pub fn train_ngram<S: AsRef<str>>(corpus: &[S], order: usize, discount: f64) -> Result<NGramLM, RespondError> {
    let mut lm = NGramLM::new(order, discount)?;
    let mut any = false;
    for text in corpus {
        if !tokenize(text.as_ref()).is_empty() {
            lm.add_sentence(text.as_ref());
            any = true;
        }
    }
    if !any {
        return Err(RespondError::Config("empty training corpus".into()));
    }
    Ok(lm)
}

pub fn lm_logprob(lm: &NGramLM, text: &str) -> LogProb {
    lm.logprob(text)
}

#[derive(Serialize, Deserialize)]
struct LmFile {
    order: usize,
    discount: f64,
    words: Vec<String>,
    /// Per history length: `(history, [(next, count)])`, sorted.
    tables: Vec<Vec<(Vec<u32>, Vec<(u32, u64)>)>>,
}

impl Serialize for NGramLM {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let tables = self
            .tables
            .iter()
            .map(|t| {
                let mut rows: Vec<(Vec<u32>, Vec<(u32, u64)>)> = t
                    .iter()
                    .map(|(h, st)| (h.clone(), st.next.iter().map(|(&w, &c)| (w, c)).collect()))
                    .collect();
                rows.sort();
                rows
            })
            .collect();
        LmFile {
            order: self.order,
            discount: self.discount,
            words: self.words.clone(),
            tables,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for NGramLM {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let f = LmFile::deserialize(d)?;
        let mut lm = NGramLM::new(f.order, f.discount).map_err(D::Error::custom)?;
        if f.words.len() < 2 || f.words[0] != BOS_TOKEN || f.words[1] != EOS_TOKEN || f.tables.len() != f.order {
            return Err(D::Error::custom("malformed language model"));
        }
        for w in f.words.into_iter().skip(2) {
            lm.intern(w);
        }
        for (h, rows) in f.tables.into_iter().enumerate() {
            for (hist, next) in rows {
                if hist.len() != h {
                    return Err(D::Error::custom("history length mismatch"));
                }
                let next: BTreeMap<u32, u64> = next.into_iter().collect();
                let total = next.values().sum();
                lm.tables[h].insert(hist, HistoryStats { total, next });
            }
        }
        Ok(lm)
    }
}
