use std::collections::HashSet;
use std::sync::Arc;

use crate::vecmath::{cosine, normalize_in_place};

use super::{tokenize, EmbeddingMatrix, Vocabulary};

/// A text vector plus how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedded {
    pub vector: Vec<f64>,
    /// No token was in vocabulary; `vector` is all zeros.
    pub oov: bool,
    pub known_tokens: usize,
}

/// Mean of the input vectors of in-vocabulary tokens, L2-normalized.
pub fn embed_text(text: &str, emb: &EmbeddingMatrix<f64>, vocab: &Vocabulary) -> Embedded {
    let mut acc = vec![0.0; emb.dim()];
    let mut known = 0usize;
    for tok in tokenize(text) {
        if let Some(id) = vocab.id(&tok) {
            for (a, x) in acc.iter_mut().zip(emb.input_row(id)) {
                *a += x;
            }
            known += 1;
        }
    }
    if known == 0 {
        return Embedded {
            vector: acc,
            oov: true,
            known_tokens: 0,
        };
    }
    for a in acc.iter_mut() {
        *a /= known as f64;
    }
    let nonzero = normalize_in_place(&mut acc);
    Embedded {
        vector: acc,
        oov: !nonzero,
        known_tokens: known,
    }
}

/// Jaccard index of the token sets; 0 when both are empty.
pub fn jaccard(a: &[String], b: &[String]) -> f64 {
    let sa: HashSet<&str> = a.iter().map(String::as_str).collect();
    let sb: HashSet<&str> = b.iter().map(String::as_str).collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 0.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

/// Vocabulary and embeddings travelling together.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEncoder {
    pub vocab: Vocabulary,
    pub embeddings: EmbeddingMatrix<f64>,
}

impl TextEncoder {
    pub fn new(vocab: Vocabulary, embeddings: EmbeddingMatrix<f64>) -> Self {
        TextEncoder { vocab, embeddings }
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dim()
    }

    pub fn embed(&self, text: &str) -> Embedded {
        embed_text(text, &self.embeddings, &self.vocab)
    }
}

/// Utterance similarity in `[0, 1]`. Implementations must be symmetric and
/// give 1 for a text compared with itself whenever it has a token.
pub trait TextMatcher: Send + Sync {
    fn similarity(&self, a: &str, b: &str) -> f64;
}

/// `0.5 · max(0, cos) + 0.5 · jaccard`.
///
/// When neither text has an in-vocabulary token the cosine term carries no
/// information and the score falls back to the Jaccard index alone.
pub fn text_similarity(a: &str, b: &str, encoder: &TextEncoder) -> f64 {
    let ta = tokenize(a);
    let tb = tokenize(b);
    if ta.is_empty() || tb.is_empty() {
        return 0.0;
    }
    if ta == tb {
        return 1.0;
    }
    let j = jaccard(&ta, &tb);
    let ea = encoder.embed(a);
    let eb = encoder.embed(b);
    if ea.oov && eb.oov {
        return j;
    }
    let cos = cosine(&ea.vector, &eb.vector).unwrap_or(0.0).max(0.0);
    (0.5 * cos + 0.5 * j).clamp(0.0, 1.0)
}

/// The default matcher backed by [`text_similarity`].
#[derive(Debug, Clone)]
pub struct HybridMatcher {
    encoder: Arc<TextEncoder>,
}

impl HybridMatcher {
    pub fn new(encoder: Arc<TextEncoder>) -> Self {
        HybridMatcher { encoder }
    }
}

impl TextMatcher for HybridMatcher {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        text_similarity(a, b, &self.encoder)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// 3-dim toy encoder: refund=(1,0,0), order=(0,1,0), hello=(0,0,1), late=(1,1,0).
    fn toy() -> TextEncoder {
        let vocab = Vocabulary::from_ordered(
            vec![
                ("refund".into(), 4),
                ("order".into(), 3),
                ("hello".into(), 2),
                ("late".into(), 1),
            ],
            1,
        );
        let input = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        let emb = EmbeddingMatrix::from_parts(3, 4, input, vec![0.0; 12]).unwrap();
        TextEncoder::new(vocab, emb)
    }

    #[test]
    fn single_token_embedding_is_normalized_row() {
        let e = toy().embed("LATE");
        let s = 0.5_f64.sqrt();
        assert!((e.vector[0] - s).abs() < 1e-15 && (e.vector[1] - s).abs() < 1e-15);
        assert!(!e.oov);
    }

    #[test]
    fn oov_text_gives_flagged_zero_vector() {
        let e = toy().embed("completely unknown words");
        assert!(e.oov);
        assert_eq!(e.vector, vec![0.0; 3]);
    }

    #[test]
    fn two_token_mean_by_hand() {
        // mean((1,0,0),(0,1,0)) = (0.5,0.5,0), normalized (1/√2, 1/√2, 0)
        let e = toy().embed("refund order");
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vector[0] - s).abs() < 1e-15);
        assert!((e.vector[1] - s).abs() < 1e-15);
        assert_eq!(e.vector[2], 0.0);
        assert_eq!(e.known_tokens, 2);
    }

    #[test]
    fn similarity_examples() {
        let enc = toy();
        assert_eq!(text_similarity("refund order", "refund order", &enc), 1.0);
        assert_eq!(text_similarity("refund", "hello", &enc), 0.0);
        assert_eq!(text_similarity("", "", &enc), 0.0);
        // cos((1,0,0), (1/√2,1/√2,0)) = 1/√2; jaccard({refund},{refund,order}) = 1/2
        let got = text_similarity("refund", "refund order", &enc);
        let want = 0.5 * std::f64::consts::FRAC_1_SQRT_2 + 0.5 * 0.5;
        assert!((got - want).abs() < 1e-12);
        // both OOV: jaccard only
        assert!((text_similarity("foo bar", "foo baz", &enc) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(text_similarity("foo bar", "foo bar", &enc), 1.0);
    }

    #[test]
    fn jaccard_basics() {
        let t = |s: &str| tokenize(s);
        assert_eq!(jaccard(&t(""), &t("")), 0.0);
        assert_eq!(jaccard(&t("a b"), &t("b a a")), 1.0);
        assert_eq!(jaccard(&t("a b"), &t("b c")), 1.0 / 3.0);
    }

    #[test]
    fn custom_matcher_is_substitutable() {
        struct Exact;
        impl TextMatcher for Exact {
            fn similarity(&self, a: &str, b: &str) -> f64 {
                f64::from(u8::from(tokenize(a) == tokenize(b) && !tokenize(a).is_empty()))
            }
        }
        let m: Box<dyn TextMatcher> = Box::new(Exact);
        assert_eq!(m.similarity("Hi there", "hi there"), 1.0);
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(a in "[a-z ]{0,30}", b in "[a-z ]{0,30}") {
            let enc = toy();
            let ab = text_similarity(&a, &b, &enc);
            let ba = text_similarity(&b, &a, &enc);
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn embedding_norm_is_one_or_zero(words in proptest::collection::vec(
            prop_oneof!["refund", "order", "hello", "late", "zzz"], 0..6)) {
            let e = toy().embed(&words.join(" "));
            let n: f64 = e.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-9);
            prop_assert_eq!(e.oov, n == 0.0);
        }
    }
}
