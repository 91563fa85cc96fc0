use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ngram::{NGramLM, EOS};

pub const DEFAULT_TEMPERATURE: f64 = 0.8;
pub const DEFAULT_MAX_TOKENS: usize = 30;
const MAX_ATTEMPTS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerateError {
    #[error("generator timed out")]
    Timeout,
    #[error("generator unavailable: {0}")]
    Unavailable(String),
    #[error("malformed generator response: {0}")]
    Malformed(String),
}

/// What a generator backend receives. Also the wire body of the external
/// adapter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    /// Context turns, oldest first.
    pub context: Vec<String>,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<String>,
    #[serde(default)]
    pub seed: u64,
}

/// A source of candidate customer utterances. Implementations must return
/// exactly `request.n` non-empty texts on success.
pub trait ResponseGenerator: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<Vec<String>, GenerateError>;
}

/// Temperature sampling from the n-gram backoff distribution.
#[derive(Debug, Clone)]
pub struct NGramGenerator<L = NGramLM> {
    pub lm: L,
    /// 0 means greedy decoding.
    pub temperature: f64,
    pub max_tokens: usize,
}

impl<L: AsRef<NGramLM>> NGramGenerator<L> {
    pub fn new(lm: L) -> Self {
        NGramGenerator {
            lm,
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    fn pick(&self, history: &[u32], first: bool, rng: &mut ChaCha8Rng) -> u32 {
        let lm = self.lm.as_ref();
        let mut ids: Vec<u32> = lm.predictable().collect();
        let mut probs = lm.distribution(history);
        if first {
            // No empty utterances: `</s>` may not start a sentence.
            ids.remove(0);
            probs.remove(0);
        }
        if self.temperature <= 0.0 {
            let mut best = 0;
            for i in 1..probs.len() {
                if probs[i] > probs[best] {
                    best = i;
                }
            }
            return ids[best];
        }
        let max_ln = probs.iter().fold(f64::NEG_INFINITY, |m, p| m.max(p.ln()));
        let weights: Vec<f64> = probs
            .iter()
            .map(|p| ((p.ln() - max_ln) / self.temperature).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                return ids[i];
            }
            u -= w;
        }
        *ids.last().expect("non-empty vocabulary")
    }

    fn sample(&self, start: &[u32], rng: &mut ChaCha8Rng) -> String {
        let lm = self.lm.as_ref();
        let mut history = start.to_vec();
        let mut out: Vec<&str> = Vec::new();
        while out.len() < self.max_tokens.max(1) {
            let next = self.pick(&history, out.is_empty(), rng);
            if next == EOS {
                break;
            }
            out.push(lm.word(next));
            if !history.is_empty() {
                history.remove(0);
                history.push(next);
            }
        }
        out.join(" ")
    }

    /// `n` continuations of `context`, distinct where five attempts allow.
    pub fn candidates(&self, context: &str, n: usize, seed: u64) -> Vec<String> {
        let start = self.lm.as_ref().start_history(context);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let mut text = self.sample(&start, &mut rng);
            for _ in 1..MAX_ATTEMPTS {
                if !seen.contains(&text) {
                    break;
                }
                text = self.sample(&start, &mut rng);
            }
            seen.insert(text.clone());
            out.push(text);
        }
        out
    }
}

impl<L: AsRef<NGramLM> + Send + Sync> ResponseGenerator for NGramGenerator<L> {
    fn generate(&self, request: &GenerationRequest) -> Result<Vec<String>, GenerateError> {
        Ok(self.candidates(&request.context.join(" "), request.n, request.seed))
    }
}

impl AsRef<NGramLM> for NGramLM {
    fn as_ref(&self) -> &NGramLM {
        self
    }
}

/// Samples `n` candidates at the default temperature.
pub fn generate_candidates(lm: &NGramLM, context: &str, n: usize, seed: u64) -> Vec<String> {
    NGramGenerator::new(lm).candidates(context, n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::respond::train_ngram;

    fn lm() -> NGramLM {
        train_ngram(
            &[
                "i want a refund please",
                "my parcel has not arrived",
                "can you check my order status",
                "the item arrived broken",
                "i would like to change my address",
            ],
            3,
            0.75,
        )
        .unwrap()
    }

    #[test]
    fn exactly_n_non_empty() {
        let lm = lm();
        for n in [1, 3, 7] {
            let c = generate_candidates(&lm, "hello how can i help", n, 11);
            assert_eq!(c.len(), n);
            assert!(c.iter().all(|t| !t.trim().is_empty()));
            assert!(c.iter().all(|t| t.split(' ').count() <= DEFAULT_MAX_TOKENS));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let lm = lm();
        let a = generate_candidates(&lm, "what is wrong", 3, 99);
        let b = generate_candidates(&lm, "what is wrong", 3, 99);
        assert_eq!(a, b);
    }

    #[test]
    fn greedy_reproduces_training_suffix() {
        // Single sentence: after "i want" the only continuation chain is
        // a → refund → please → </s>.
        let lm = train_ngram(&["i want a refund please"], 3, 0.75).unwrap();
        let g = NGramGenerator {
            lm: &lm,
            temperature: 0.0,
            max_tokens: 30,
        };
        let got = g.candidates("so i want", 3, 1);
        assert_eq!(got, vec!["a refund please"; 3]);
    }

    #[test]
    fn duplicates_are_regenerated_when_possible() {
        let lm = lm();
        let c = generate_candidates(&lm, "", 3, 4);
        let distinct: HashSet<_> = c.iter().collect();
        assert_eq!(distinct.len(), 3);
    }

    #[test]
    fn backend_is_substitutable() {
        struct Canned;
        impl ResponseGenerator for Canned {
            fn generate(&self, r: &GenerationRequest) -> Result<Vec<String>, GenerateError> {
                Ok(vec!["ok".to_string(); r.n])
            }
        }
        let lm = lm();
        let backends: Vec<Box<dyn ResponseGenerator>> =
            vec![Box::new(Canned), Box::new(NGramGenerator::new(lm))];
        let req = GenerationRequest {
            context: vec!["hi".into()],
            n: 3,
            scene: None,
            seed: 0,
        };
        for b in backends {
            assert_eq!(b.generate(&req).unwrap().len(), 3);
        }
    }
}
