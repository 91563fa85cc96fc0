//! Reasonableness ranking of candidate customer utterances.
//!
//! The default ranker is logistic regression over four features:
//!
//! | # | feature |
//! |---|---------|
//! | 0 | cosine of context and response embeddings |
//! | 1 | token Jaccard of the last customer turn and the response |
//! | 2 | `min(tokens / 30, 1)` |
//! | 3 | per-token LM log-probability / 10 |

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DialogueScript, Role};
use crate::textenc::{jaccard, tokenize, TextEncoder};
use crate::vecmath::cosine;

use super::ngram::NGramLM;
use super::{CandidateResponse, CandidateSource, RespondError};

pub const RANKER_FEATURES: usize = 4;
const LENGTH_SCALE: f64 = 30.0;
const LOGPROB_SCALE: f64 = 10.0;

/// Dialogue context a candidate is judged against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankQuery {
    pub context: String,
    pub last_customer: String,
}

impl RankQuery {
    pub fn new(context: impl Into<String>, last_customer: impl Into<String>) -> Self {
        RankQuery {
            context: context.into(),
            last_customer: last_customer.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankPair {
    pub query: RankQuery,
    pub response: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledFeatures {
    pub features: [f64; RANKER_FEATURES],
    pub label: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankerConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for RankerConfig {
    fn default() -> Self {
        RankerConfig {
            epochs: 500,
            learning_rate: 0.5,
            l2: 1e-3,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankerModel {
    pub weights: [f64; RANKER_FEATURES],
    pub bias: f64,
    pub config: RankerConfig,
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl RankerModel {
    pub fn score_features(&self, x: &[f64; RANKER_FEATURES]) -> f64 {
        logistic(linear(&self.params(), x))
    }

    /// Weights followed by the bias.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.to_vec();
        p.push(self.bias);
        p
    }
}

fn linear(params: &[f64], x: &[f64; RANKER_FEATURES]) -> f64 {
    params[..RANKER_FEATURES]
        .iter()
        .zip(x)
        .map(|(w, v)| w * v)
        .sum::<f64>()
        + params[RANKER_FEATURES]
}

/// Mean cross-entropy plus `l2/2 · |w|²` (bias unpenalized).
/// `params` holds the four weights then the bias.
pub fn ranker_loss(params: &[f64], data: &[LabeledFeatures], l2: f64) -> f64 {
    assert_eq!(params.len(), RANKER_FEATURES + 1);
    let ce: f64 = data
        .iter()
        .map(|d| {
            let z = linear(params, &d.features);
            if d.label {
                softplus(-z)
            } else {
                softplus(z)
            }
        })
        .sum::<f64>()
        / data.len() as f64;
    let reg: f64 = params[..RANKER_FEATURES].iter().map(|w| w * w).sum();
    ce + 0.5 * l2 * reg
}

pub fn ranker_gradient(params: &[f64], data: &[LabeledFeatures], l2: f64) -> Vec<f64> {
    assert_eq!(params.len(), RANKER_FEATURES + 1);
    let mut g = vec![0.0; RANKER_FEATURES + 1];
    for d in data {
        let err = logistic(linear(params, &d.features)) - f64::from(u8::from(d.label));
        for (gi, x) in g.iter_mut().zip(&d.features) {
            *gi += err * x;
        }
        g[RANKER_FEATURES] += err;
    }
    let n = data.len() as f64;
    for (i, gi) in g.iter_mut().enumerate() {
        *gi /= n;
        if i < RANKER_FEATURES {
            *gi += l2 * params[i];
        }
    }
    g
}

fn canonical_order(a: &LabeledFeatures, b: &LabeledFeatures) -> Ordering {
    a.label.cmp(&b.label).then_with(|| {
        a.features
            .iter()
            .zip(&b.features)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// Full-batch gradient descent from zero. Examples are put in a canonical
/// order first, so the result does not depend on input order.
pub fn train_ranker(data: &[LabeledFeatures], config: RankerConfig) -> Result<RankerModel, RespondError> {
    let pos = data.iter().filter(|d| d.label).count();
    if pos == 0 || pos == data.len() {
        return Err(RespondError::Config("ranker training needs both classes".into()));
    }
    if !(config.learning_rate > 0.0) || !(config.l2 >= 0.0) {
        return Err(RespondError::Config("learning rate must be > 0 and l2 >= 0".into()));
    }
    if data.iter().any(|d| d.features.iter().any(|x| !x.is_finite())) {
        return Err(RespondError::Config("non-finite feature".into()));
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(canonical_order);
    let mut params = vec![0.0; RANKER_FEATURES + 1];
    for _ in 0..config.epochs {
        let g = ranker_gradient(&params, &sorted, config.l2);
        for (p, gi) in params.iter_mut().zip(g) {
            *p -= config.learning_rate * gi;
        }
    }
    let mut weights = [0.0; RANKER_FEATURES];
    weights.copy_from_slice(&params[..RANKER_FEATURES]);
    Ok(RankerModel {
        weights,
        bias: params[RANKER_FEATURES],
        config,
    })
}

/// Computes ranker features from text.
#[derive(Debug, Clone)]
pub struct RankerFeaturizer {
    pub encoder: Arc<TextEncoder>,
    /// Customer-turn language model.
    pub lm: Arc<NGramLM>,
}

impl RankerFeaturizer {
    pub fn new(encoder: Arc<TextEncoder>, lm: Arc<NGramLM>) -> Self {
        RankerFeaturizer { encoder, lm }
    }

    pub fn features(&self, query: &RankQuery, response: &str) -> [f64; RANKER_FEATURES] {
        ranker_features(&self.encoder, &self.lm, query, response)
    }
}

pub fn ranker_features(
    encoder: &TextEncoder,
    lm: &NGramLM,
    query: &RankQuery,
    response: &str,
) -> [f64; RANKER_FEATURES] {
    let ctx = encoder.embed(&query.context);
    let resp = encoder.embed(response);
    let cos = cosine(&ctx.vector, &resp.vector).unwrap_or(0.0);
    let resp_tokens = tokenize(response);
    let jac = jaccard(&tokenize(&query.last_customer), &resp_tokens);
    let len = (resp_tokens.len() as f64 / LENGTH_SCALE).min(1.0);
    let lp = lm.logprob(response).per_token / LOGPROB_SCALE;
    [cos, jac, len, lp]
}

pub fn train_ranker_from_pairs(
    featurizer: &RankerFeaturizer,
    positives: &[RankPair],
    negatives: &[RankPair],
    config: RankerConfig,
) -> Result<RankerModel, RespondError> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(RespondError::Config("ranker training needs both classes".into()));
    }
    let data: Vec<LabeledFeatures> = positives
        .iter()
        .map(|p| (p, true))
        .chain(negatives.iter().map(|p| (p, false)))
        .map(|(p, label)| LabeledFeatures {
            features: featurizer.features(&p.query, &p.response),
            label,
        })
        .collect();
    train_ranker(&data, config)
}

fn join_context(turns: &[&str]) -> String {
    turns.join(" | ")
}

/// Context text for the last `window` turns, oldest first.
pub fn context_text<S: AsRef<str>>(turns: &[S], window: usize) -> String {
    let start = turns.len().saturating_sub(window);
    join_context(&turns[start..].iter().map(|s| s.as_ref()).collect::<Vec<_>>())
}

/// Training pairs from scripts: every customer turn after the opening is a
/// positive for the turns before it; each positive gets one negative, a
/// customer turn drawn from a script of a different scene.
pub fn build_ranker_pairs(
    scripts: &[DialogueScript],
    context_window: usize,
    seed: u64,
) -> (Vec<RankPair>, Vec<RankPair>) {
    let mut by_scene: HashMap<&str, Vec<&str>> = HashMap::new();
    for s in scripts {
        for t in s.turns.iter().filter(|t| t.role == Role::Customer) {
            by_scene.entry(s.scene.as_str()).or_default().push(&t.text);
        }
    }
    let mut scenes: Vec<&str> = by_scene.keys().copied().collect();
    scenes.sort_unstable();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for s in scripts {
        let texts: Vec<&str> = s.turns.iter().map(|t| t.text.as_str()).collect();
        let others: Vec<&str> = scenes.iter().copied().filter(|sc| *sc != s.scene).collect();
        for (i, t) in s.turns.iter().enumerate().skip(1) {
            if t.role != Role::Customer {
                continue;
            }
            let last_customer = s.turns[..i]
                .iter()
                .rev()
                .find(|x| x.role == Role::Customer)
                .map(|x| x.text.clone())
                .unwrap_or_default();
            let query = RankQuery::new(context_text(&texts[..i], context_window), last_customer);
            positives.push(RankPair {
                query: query.clone(),
                response: t.text.clone(),
            });
            if let Some(scene) = others.choose(&mut rng) {
                if let Some(text) = by_scene[scene].choose(&mut rng) {
                    negatives.push(RankPair {
                        query,
                        response: (*text).to_string(),
                    });
                }
            }
        }
    }
    (positives, negatives)
}

/// Scores a candidate in `(0, 1)`.
pub trait ResponseRanker: Send + Sync {
    fn score(&self, query: &RankQuery, response: &str) -> f64;
}

#[derive(Debug, Clone)]
pub struct LogisticRanker {
    pub model: RankerModel,
    pub featurizer: RankerFeaturizer,
}

impl ResponseRanker for LogisticRanker {
    fn score(&self, query: &RankQuery, response: &str) -> f64 {
        self.model
            .score_features(&self.featurizer.features(query, response))
    }
}

/// Scores, deduplicates by exact text, and sorts by score descending, then
/// retrieval before generation, then text.
pub fn rank_candidates(
    ranker: &dyn ResponseRanker,
    query: &RankQuery,
    candidates: Vec<CandidateResponse>,
) -> Result<Vec<CandidateResponse>, RespondError> {
    if candidates.is_empty() {
        return Err(RespondError::Contract("no candidates to rank".into()));
    }
    let mut best: HashMap<String, CandidateResponse> = HashMap::new();
    for mut c in candidates {
        if c.text.trim().is_empty() {
            return Err(RespondError::Contract("empty candidate text".into()));
        }
        let score = ranker.score(query, &c.text);
        c.ranker_score = Some(score);
        match best.get(&c.text) {
            Some(prev) if !better(&c, prev) => {}
            _ => {
                best.insert(c.text.clone(), c);
            }
        }
    }
    let mut out: Vec<CandidateResponse> = best.into_values().collect();
    out.sort_by(|a, b| {
        b.ranker_score
            .unwrap_or(0.0)
            .total_cmp(&a.ranker_score.unwrap_or(0.0))
            .then(a.source.cmp(&b.source))
            .then_with(|| a.text.cmp(&b.text))
    });
    Ok(out)
}

fn better(a: &CandidateResponse, b: &CandidateResponse) -> bool {
    let (sa, sb) = (a.ranker_score.unwrap_or(0.0), b.ranker_score.unwrap_or(0.0));
    sa > sb || (sa == sb && a.source < b.source)
}

impl CandidateSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            CandidateSource::Retrieval => "retrieval",
            CandidateSource::Generation => "generation",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::respond::train_ngram;
    use crate::textenc::{EmbeddingMatrix, Vocabulary};
    use proptest::prelude::*;
    use rand::Rng;

    fn toy_encoder() -> TextEncoder {
        let vocab = Vocabulary::from_ordered(
            vec![("refund".into(), 3), ("order".into(), 2), ("hello".into(), 1)],
            1,
        );
        // refund (1,0), order (0,1), hello (1,0)
        let input = vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0];
        TextEncoder::new(
            vocab,
            EmbeddingMatrix::from_parts(2, 3, input, vec![0.0; 6]).unwrap(),
        )
    }

    fn random_data(rng: &mut ChaCha8Rng, n: usize) -> Vec<LabeledFeatures> {
        (0..n)
            .map(|i| LabeledFeatures {
                features: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
                label: i % 2 == 0,
            })
            .collect()
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = random_data(&mut rng, 40);
        let h = 1e-4;
        for _ in 0..20 {
            let p: Vec<f64> = (0..=RANKER_FEATURES).map(|_| rng.random_range(-2.0..2.0)).collect();
            let g = ranker_gradient(&p, &data, 0.01);
            for i in 0..p.len() {
                let mut hi = p.clone();
                let mut lo = p.clone();
                hi[i] += h;
                lo[i] -= h;
                let fd = (ranker_loss(&hi, &data, 0.01) - ranker_loss(&lo, &data, 0.01)) / (2.0 * h);
                let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-8);
                assert!(rel < 1e-4, "param {i}: fd {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn separable_data_is_fit_perfectly() {
        let data: Vec<LabeledFeatures> = (0..20)
            .map(|i| {
                let x = i as f64 / 10.0 - 0.95;
                LabeledFeatures {
                    features: [x, 0.3, -0.2, 0.1],
                    label: x > 0.0,
                }
            })
            .collect();
        let m = train_ranker(&data, RankerConfig::default()).unwrap();
        let acc = data
            .iter()
            .filter(|d| (m.score_features(&d.features) > 0.5) == d.label)
            .count();
        assert_eq!(acc, data.len());
    }

    #[test]
    fn single_class_is_rejected() {
        let data = vec![
            LabeledFeatures {
                features: [0.0; 4],
                label: true,
            };
            3
        ];
        assert!(matches!(
            train_ranker(&data, RankerConfig::default()),
            Err(RespondError::Config(_))
        ));
    }

    #[test]
    fn training_is_order_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data = random_data(&mut rng, 30);
        let mut shuffled = data.clone();
        shuffled.reverse();
        shuffled.swap(3, 17);
        let a = train_ranker(&data, RankerConfig::default()).unwrap();
        let b = train_ranker(&shuffled, RankerConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    fn hand_ranker() -> LogisticRanker {
        let lm = train_ngram(&["hello"], 2, 0.75).unwrap();
        LogisticRanker {
            model: RankerModel {
                weights: [2.0, 1.0, 0.0, 0.0],
                bias: -1.0,
                config: RankerConfig::default(),
            },
            featurizer: RankerFeaturizer::new(Arc::new(toy_encoder()), Arc::new(lm)),
        }
    }

    #[test]
    fn two_candidates_by_hand() {
        // context "refund" → (1,0). last customer "refund order".
        // "hello": cos((1,0),(1,0)) = 1, jaccard 0 → z = 1
        // "order": cos((1,0),(0,1)) = 0, jaccard 1/2 → z = −0.5
        let r = hand_ranker();
        let q = RankQuery::new("refund", "refund order");
        let out = rank_candidates(
            &r,
            &q,
            vec![
                CandidateResponse::new("order", CandidateSource::Retrieval),
                CandidateResponse::new("hello", CandidateSource::Generation),
            ],
        )
        .unwrap();
        assert_eq!(out[0].text, "hello");
        let want0 = 1.0 / (1.0 + (-1.0f64).exp());
        let want1 = 1.0 / (1.0 + 0.5f64.exp());
        assert!((out[0].ranker_score.unwrap() - want0).abs() < 1e-12);
        assert!((out[1].ranker_score.unwrap() - want1).abs() < 1e-12);
    }

    #[test]
    fn single_and_empty_inputs() {
        let r = hand_ranker();
        let q = RankQuery::new("refund", "refund");
        let one = rank_candidates(&r, &q, vec![CandidateResponse::new("hello", CandidateSource::Generation)])
            .unwrap();
        assert_eq!(one.len(), 1);
        assert!(one[0].ranker_score.is_some());
        assert!(matches!(rank_candidates(&r, &q, vec![]), Err(RespondError::Contract(_))));
    }

    #[test]
    fn duplicates_collapse_to_retrieval() {
        let r = hand_ranker();
        let q = RankQuery::new("refund", "refund");
        let out = rank_candidates(
            &r,
            &q,
            vec![
                CandidateResponse::new("order", CandidateSource::Generation),
                CandidateResponse::new("order", CandidateSource::Retrieval),
                CandidateResponse::new("hello", CandidateSource::Generation),
            ],
        )
        .unwrap();
        assert_eq!(out.len(), 2);
        let order = out.iter().find(|c| c.text == "order").unwrap();
        assert_eq!(order.source, CandidateSource::Retrieval);
    }

    #[test]
    fn pairs_draw_negatives_from_other_scenes() {
        let mk = |id: &str, scene: &str, turns: &[&str]| {
            let roles = [Role::Customer, Role::Agent];
            DialogueScript::new(
                id,
                scene,
                turns
                    .iter()
                    .enumerate()
                    .map(|(i, t)| (roles[i % 2], t.to_string()))
                    .collect(),
            )
            .unwrap()
        };
        let scripts = vec![
            mk("a", "s1", &["refund please", "sure", "thanks", "bye"]),
            mk("b", "s2", &["where is parcel", "checking", "ok great", "welcome"]),
        ];
        let (pos, neg) = build_ranker_pairs(&scripts, 4, 1);
        assert_eq!(pos.len(), 2);
        assert_eq!(neg.len(), 2);
        assert_eq!(pos[0].response, "thanks");
        assert_eq!(pos[0].query.last_customer, "refund please");
        assert!(["where is parcel", "ok great"].contains(&neg[0].response.as_str()));
        assert!(["refund please", "thanks"].contains(&neg[1].response.as_str()));
        assert_eq!(build_ranker_pairs(&scripts, 4, 1), (pos, neg));
    }

    proptest! {
        #[test]
        fn ranking_is_deduplicated_permutation(texts in proptest::collection::vec(
            prop_oneof!["refund", "order", "hello", "refund order", "zzz"], 1..8), flip in any::<u64>()) {
            let r = hand_ranker();
            let q = RankQuery::new("refund hello", "order");
            let cands: Vec<CandidateResponse> = texts.iter().enumerate().map(|(i, t)| {
                let src = if (flip >> (i % 64)) & 1 == 1 { CandidateSource::Retrieval } else { CandidateSource::Generation };
                CandidateResponse::new(t.clone(), src)
            }).collect();
            let out = rank_candidates(&r, &q, cands).unwrap();
            let mut want: Vec<&String> = texts.iter().collect();
            want.sort();
            want.dedup();
            let mut got: Vec<&String> = out.iter().map(|c| &c.text).collect();
            got.sort();
            prop_assert_eq!(got, want);
            for w in out.windows(2) {
                prop_assert!(w[0].ranker_score >= w[1].ranker_score);
            }
        }
    }
}
