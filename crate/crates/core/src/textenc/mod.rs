//! Text encoding: tokenization, vocabulary, skip-gram negative-sampling
//! embeddings, text vectors and the default utterance matcher.

mod persist;
mod sgns;
mod similarity;
mod tokenize;
mod vocab;

use thiserror::Error;

pub use persist::{read_encoder, write_encoder, ENCODER_MAGIC, ENCODER_VERSION};
pub use sgns::{
    corpus_sentences, sgns_pair_gradient, sgns_pair_loss, train_sgns, EmbeddingMatrix, PairGradient,
    SgnsConfig, SgnsTrainer,
};
pub use similarity::{
    embed_text, jaccard, text_similarity, Embedded, HybridMatcher, TextEncoder, TextMatcher,
};
pub use tokenize::tokenize;
pub use vocab::{build_vocab, Vocabulary};

#[derive(Debug, Error)]
pub enum TextEncError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("embedding file format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
