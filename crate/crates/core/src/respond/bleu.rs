use std::collections::HashMap;

use crate::textenc::tokenize;

use super::RespondError;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_default() += 1;
        }
    }
    m
}

/// Corpus BLEU with n = 1, 2 and uniform weights.
///
/// Clipped counts and lengths are summed over the corpus before taking
/// precisions. When no bigram matches, the bigram precision becomes
/// `1 / (total + 1)`.
pub fn bleu2<H: AsRef<str>, R: AsRef<str>>(hypotheses: &[H], references: &[R]) -> Result<f64, RespondError> {
    if hypotheses.len() != references.len() {
        return Err(RespondError::Contract(format!(
            "{} hypotheses vs {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    if hypotheses.is_empty() {
        return Err(RespondError::Contract("empty corpus".into()));
    }
    let mut matched = [0usize; 2];
    let mut total = [0usize; 2];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (h, r) in hypotheses.iter().zip(references) {
        let h = tokenize(h.as_ref());
        let r = tokenize(r.as_ref());
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=2 {
            let hc = ngram_counts(&h, n);
            let rc = ngram_counts(&r, n);
            for (g, c) in hc {
                matched[n - 1] += c.min(rc.get(g).copied().unwrap_or(0));
                total[n - 1] += c;
            }
        }
    }
    if hyp_len == 0 || matched[0] == 0 {
        return Ok(0.0);
    }
    let p1 = matched[0] as f64 / total[0] as f64;
    let p2 = if matched[1] == 0 {
        1.0 / (total[1] as f64 + 1.0)
    } else {
        matched[1] as f64 / total[1] as f64
    };
    let bp = if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok(bp * (p1 * p2).sqrt())
}
