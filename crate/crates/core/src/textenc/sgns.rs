//! Skip-gram with negative sampling.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Dialogue;
use crate::vecmath::dot;
use crate::Scalar;

use super::{tokenize, TextEncError, Vocabulary};

/// Exponent applied to unigram counts for the negative-sampling distribution.
const NOISE_EXPONENT: f64 = 0.75;
/// Learning rate decays linearly to this fraction of its initial value.
const FINAL_LR_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SgnsConfig {
    pub dim: usize,
    /// Maximum context offset on either side of the center token.
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            dim: 200,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            seed: 42,
        }
    }
}

impl SgnsConfig {
    pub fn validate(&self) -> Result<(), TextEncError> {
        let positive = [
            ("dim", self.dim),
            ("window", self.window),
            ("negatives", self.negatives),
            ("epochs", self.epochs),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(TextEncError::Config(format!("{name} must be >= 1")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TextEncError::Config("learning_rate must be > 0".into()));
        }
        Ok(())
    }
}

/// Input (center) and output (context) vectors, row-major, one row per
/// vocabulary id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix<T> {
    dim: usize,
    rows: usize,
    input: Vec<T>,
    output: Vec<T>,
}

impl<T: Scalar> EmbeddingMatrix<T> {
    pub fn from_parts(
        dim: usize,
        rows: usize,
        input: Vec<T>,
        output: Vec<T>,
    ) -> Result<Self, TextEncError> {
        if dim == 0 {
            return Err(TextEncError::Config("dim must be >= 1".into()));
        }
        if input.len() != dim * rows || output.len() != dim * rows {
            return Err(TextEncError::Format(format!(
                "matrix sizes {} / {} do not match {rows} x {dim}",
                input.len(),
                output.len()
            )));
        }
        if input.iter().chain(&output).any(|x| !x.is_finite()) {
            return Err(TextEncError::Format("non-finite matrix entry".into()));
        }
        Ok(EmbeddingMatrix {
            dim,
            rows,
            input,
            output,
        })
    }

    /// word2vec-style initialization: small uniform input vectors, zero
    /// output vectors.
    pub fn random(rows: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half = 0.5 / dim as f64;
        let input = (0..rows * dim)
            .map(|_| T::of(rng.random_range(-half..half)))
            .collect();
        EmbeddingMatrix {
            dim,
            rows,
            input,
            output: vec![T::zero(); rows * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn input_row(&self, id: u32) -> &[T] {
        let s = id as usize * self.dim;
        &self.input[s..s + self.dim]
    }

    pub fn output_row(&self, id: u32) -> &[T] {
        let s = id as usize * self.dim;
        &self.output[s..s + self.dim]
    }

    pub fn input(&self) -> &[T] {
        &self.input
    }

    pub fn output(&self) -> &[T] {
        &self.output
    }
}

fn log_sigmoid<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Negative log-likelihood of one (center, context) pair with its negatives:
/// `-log σ(u_ctx·v) - Σ log σ(-u_neg·v)`.
pub fn sgns_pair_loss<T: Scalar>(center: &[T], context: &[T], negatives: &[&[T]]) -> T {
    let mut loss = -log_sigmoid(dot(context, center));
    for n in negatives {
        loss = loss - log_sigmoid(-dot(n, center));
    }
    loss
}

#[derive(Debug, Clone)]
pub struct PairGradient<T> {
    pub loss: T,
    pub center: Vec<T>,
    pub context: Vec<T>,
    pub negatives: Vec<Vec<T>>,
}

/// Analytic gradient of [`sgns_pair_loss`] with respect to every vector.
pub fn sgns_pair_gradient<T: Scalar>(
    center: &[T],
    context: &[T],
    negatives: &[&[T]],
) -> PairGradient<T> {
    let dim = center.len();
    let pos = dot(context, center);
    // d/dx of -log σ(x) is σ(x) - 1.
    let g_pos = sigmoid(pos) - T::one();
    let mut g_center: Vec<T> = context.iter().map(|&u| g_pos * u).collect();
    let g_context: Vec<T> = center.iter().map(|&v| g_pos * v).collect();
    let mut g_negs = Vec::with_capacity(negatives.len());
    let mut loss = -log_sigmoid(pos);
    for n in negatives {
        let s = dot(n, center);
        loss = loss - log_sigmoid(-s);
        let g = sigmoid(s);
        for k in 0..dim {
            g_center[k] = g_center[k] + g * n[k];
        }
        g_negs.push(center.iter().map(|&v| g * v).collect());
    }
    PairGradient {
        loss,
        center: g_center,
        context: g_context,
        negatives: g_negs,
    }
}

/// Token-id sentences, one per turn, out-of-vocabulary tokens dropped.
pub fn corpus_sentences(corpus: &[Dialogue], vocab: &Vocabulary) -> Vec<Vec<u32>> {
    corpus
        .iter()
        .flat_map(|d| d.turns())
        .map(|t| {
            tokenize(&t.text)
                .iter()
                .filter_map(|tok| vocab.id(tok))
                .collect::<Vec<_>>()
        })
        .filter(|s| s.len() >= 2)
        .collect()
}

fn pairs(sentence: &[u32], window: usize) -> impl Iterator<Item = (u32, u32)> + '_ {
    (0..sentence.len()).flat_map(move |i| {
        let lo = i.saturating_sub(window);
        let hi = (i + window).min(sentence.len() - 1);
        (lo..=hi)
            .filter(move |&j| j != i)
            .map(move |j| (sentence[i], sentence[j]))
    })
}

/// Epoch-by-epoch SGNS optimizer. [`train_sgns`] drives it to completion;
/// tests step it manually to observe the loss.
pub struct SgnsTrainer<T> {
    config: SgnsConfig,
    matrix: EmbeddingMatrix<T>,
    noise: WeightedIndex<f64>,
    rng: ChaCha8Rng,
    pairs_per_epoch: usize,
    processed: usize,
}

impl<T: Scalar> SgnsTrainer<T> {
    pub fn new(
        vocab: &Vocabulary,
        sentences: &[Vec<u32>],
        config: SgnsConfig,
    ) -> Result<Self, TextEncError> {
        config.validate()?;
        if vocab.is_empty() {
            return Err(TextEncError::Config("empty vocabulary".into()));
        }
        let weights: Vec<f64> = vocab
            .counts()
            .iter()
            .map(|&c| (c as f64).powf(NOISE_EXPONENT))
            .collect();
        let noise = WeightedIndex::new(&weights)
            .map_err(|e| TextEncError::Config(format!("noise distribution: {e}")))?;
        let pairs_per_epoch = sentences
            .iter()
            .map(|s| pairs(s, config.window).count())
            .sum();
        Ok(SgnsTrainer {
            matrix: EmbeddingMatrix::random(vocab.len(), config.dim, config.seed),
            rng: ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1)),
            config,
            noise,
            pairs_per_epoch,
            processed: 0,
        })
    }

    pub fn matrix(&self) -> &EmbeddingMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> EmbeddingMatrix<T> {
        self.matrix
    }

    fn current_lr(&self) -> T {
        let total = (self.pairs_per_epoch * self.config.epochs).max(1) as f64;
        let progress = (self.processed as f64 / total).min(1.0);
        T::of(self.config.learning_rate * (1.0 - (1.0 - FINAL_LR_FRACTION) * progress))
    }

    fn draw_negatives(noise: &WeightedIndex<f64>, rng: &mut ChaCha8Rng, n: usize, context: u32) -> Vec<u32> {
        (0..n)
            .map(|_| noise.sample(rng) as u32)
            .filter(|&id| id != context)
            .collect()
    }

    /// One SGD pass over every (center, context) pair.
    pub fn run_epoch(&mut self, sentences: &[Vec<u32>]) {
        let dim = self.matrix.dim;
        for sentence in sentences {
            for (center, context) in pairs(sentence, self.config.window) {
                let negs = Self::draw_negatives(
                    &self.noise,
                    &mut self.rng,
                    self.config.negatives,
                    context,
                );
                let lr = self.current_lr();
                let grad = {
                    let neg_rows: Vec<&[T]> =
                        negs.iter().map(|&n| self.matrix.output_row(n)).collect();
                    sgns_pair_gradient(
                        self.matrix.input_row(center),
                        self.matrix.output_row(context),
                        &neg_rows,
                    )
                };
                let c = center as usize * dim;
                for k in 0..dim {
                    self.matrix.input[c + k] = self.matrix.input[c + k] - lr * grad.center[k];
                }
                let o = context as usize * dim;
                for k in 0..dim {
                    self.matrix.output[o + k] = self.matrix.output[o + k] - lr * grad.context[k];
                }
                for (n, g) in negs.iter().zip(&grad.negatives) {
                    let o = *n as usize * dim;
                    for k in 0..dim {
                        self.matrix.output[o + k] = self.matrix.output[o + k] - lr * g[k];
                    }
                }
                self.processed += 1;
            }
        }
    }

    /// Mean pair loss over the full pair set, with negatives drawn from a
    /// dedicated stream so repeated calls see the same noise words.
    pub fn loss(&self, sentences: &[Vec<u32>], noise_seed: u64) -> T {
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let mut total = T::zero();
        let mut count = 0usize;
        for sentence in sentences {
            for (center, context) in pairs(sentence, self.config.window) {
                let negs =
                    Self::draw_negatives(&self.noise, &mut rng, self.config.negatives, context);
                let neg_rows: Vec<&[T]> =
                    negs.iter().map(|&n| self.matrix.output_row(n)).collect();
                total = total
                    + sgns_pair_loss(
                        self.matrix.input_row(center),
                        self.matrix.output_row(context),
                        &neg_rows,
                    );
                count += 1;
            }
        }
        if count == 0 {
            T::zero()
        } else {
            total / T::of(count as f64)
        }
    }
}

/// Trains embeddings for `vocab` on the turns of `corpus`.
pub fn train_sgns(
    corpus: &[Dialogue],
    vocab: &Vocabulary,
    config: &SgnsConfig,
) -> Result<EmbeddingMatrix<f64>, TextEncError> {
    let sentences = corpus_sentences(corpus, vocab);
    let mut trainer = SgnsTrainer::new(vocab, &sentences, config.clone())?;
    for _ in 0..config.epochs {
        trainer.run_epoch(&sentences);
    }
    Ok(trainer.into_matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Role;
    use crate::textenc::build_vocab;

    fn corpus() -> Vec<Dialogue> {
        let lines = [
            ("i want a refund for my order", "sure i can help with the refund"),
            ("my package is late", "let me check the delivery status"),
            ("refund my order please", "the refund will arrive in three days"),
            ("where is my package", "the delivery is on the way"),
        ];
        lines
            .iter()
            .enumerate()
            .map(|(i, (c, a))| {
                Dialogue::new(
                    format!("d{i}"),
                    None,
                    vec![(Role::Customer, c.to_string()), (Role::Agent, a.to_string())],
                )
                .unwrap()
            })
            .collect()
    }

    fn small_config() -> SgnsConfig {
        SgnsConfig {
            dim: 16,
            window: 2,
            negatives: 3,
            epochs: 3,
            learning_rate: 0.05,
            seed: 7,
        }
    }

    #[test]
    fn output_shape_matches_vocab_and_dim() {
        let c = corpus();
        let v = build_vocab(&c, 1);
        let m = train_sgns(&c, &v, &small_config()).unwrap();
        assert_eq!(m.rows(), v.len());
        assert_eq!(m.dim(), 16);
        assert_eq!(m.input_row(0).len(), 16);
        assert!(m.input().iter().chain(m.output()).all(|x| x.is_finite()));
    }

    #[test]
    fn same_seed_is_bitwise_deterministic() {
        let c = corpus();
        let v = build_vocab(&c, 1);
        let a = train_sgns(&c, &v, &small_config()).unwrap();
        let b = train_sgns(&c, &v, &small_config()).unwrap();
        let bits = |m: &EmbeddingMatrix<f64>| -> Vec<u64> {
            m.input().iter().chain(m.output()).map(|x| x.to_bits()).collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn empty_vocabulary_is_config_error() {
        let c = corpus();
        let v = build_vocab(&c, 1000);
        assert!(matches!(
            train_sgns(&c, &v, &small_config()),
            Err(TextEncError::Config(_))
        ));
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = small_config();
        cfg.window = 0;
        assert!(cfg.validate().is_err());
        cfg = small_config();
        cfg.learning_rate = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn loss_decreases_with_training() {
        let c = corpus();
        let v = build_vocab(&c, 1);
        let sentences = corpus_sentences(&c, &v);
        let mut cfg = small_config();
        cfg.learning_rate = 0.01;
        cfg.epochs = 20;
        let mut t = SgnsTrainer::<f64>::new(&v, &sentences, cfg).unwrap();
        let initial = t.loss(&sentences, 99);
        let mut prev = initial;
        for _ in 0..20 {
            t.run_epoch(&sentences);
            let l = t.loss(&sentences, 99);
            assert!(l <= prev + 1e-9, "loss went up: {prev} -> {l}");
            prev = l;
        }
        assert!(prev < initial);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dim = 6;
        let mut vec = || (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let center = vec();
        let context = vec();
        let negs = [vec(), vec()];
        let neg_refs: Vec<&[f64]> = negs.iter().map(|n| n.as_slice()).collect();
        let g = sgns_pair_gradient(&center, &context, &neg_refs);
        let h = 1e-4;
        for k in 0..dim {
            let mut plus = center.clone();
            let mut minus = center.clone();
            plus[k] += h;
            minus[k] -= h;
            let fd = (sgns_pair_loss(&plus, &context, &neg_refs)
                - sgns_pair_loss(&minus, &context, &neg_refs))
                / (2.0 * h);
            assert!((fd - g.center[k]).abs() <= 1e-6 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn generic_over_f32() {
        let c = corpus();
        let v = build_vocab(&c, 1);
        let s = corpus_sentences(&c, &v);
        let mut t = SgnsTrainer::<f32>::new(&v, &s, small_config()).unwrap();
        t.run_epoch(&s);
        assert!(t.matrix().input().iter().all(|x| x.is_finite()));
    }
}
