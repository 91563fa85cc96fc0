//! Candidate customer utterances for the simulator bot: retrieval from the
//! context index, generation from a pluggable generator (n-gram by default),
//! a pluggable reasonableness ranker (logistic by default), and BLEU-2.

mod bleu;
mod generate;
mod ngram;
mod ranker;
mod retrieve;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vindex::IndexError;

pub use bleu::bleu2;
pub use generate::{
    generate_candidates, GenerateError, GenerationRequest, NGramGenerator, ResponseGenerator,
    DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE,
};
pub use ngram::{lm_logprob, train_ngram, LogProb, NGramLM, BOS, EOS};
pub use ranker::{
    build_ranker_pairs, context_text, rank_candidates, ranker_features, ranker_gradient, ranker_loss,
    train_ranker, train_ranker_from_pairs, LabeledFeatures, LogisticRanker, RankPair, RankQuery,
    RankerConfig, RankerFeaturizer, RankerModel, ResponseRanker, RANKER_FEATURES,
};
pub use retrieve::{retrieve_candidates, Retrieved};

#[derive(Debug, Error)]
pub enum RespondError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSource {
    Retrieval,
    Generation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResponse {
    pub text: String,
    pub source: CandidateSource,
    /// Filled in by [`rank_candidates`].
    pub ranker_score: Option<f64>,
}

impl CandidateResponse {
    pub fn new(text: impl Into<String>, source: CandidateSource) -> Self {
        CandidateResponse {
            text: text.into(),
            source,
            ranker_score: None,
        }
    }
}
