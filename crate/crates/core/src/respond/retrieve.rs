use crate::vindex::{SearchMode, VectorIndex};

use super::{CandidateResponse, CandidateSource, RespondError};

/// A retrieval candidate with the index entry it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved {
    pub candidate: CandidateResponse,
    pub entry_id: u32,
    pub dialogue_id: String,
    pub score: f64,
}

/// Next customer utterances of the top-`k` contexts, in search order.
pub fn retrieve_candidates(
    index: &VectorIndex<f64>,
    query: &[f64],
    k: usize,
    mode: SearchMode,
) -> Result<Vec<Retrieved>, RespondError> {
    if index.is_empty() {
        return Ok(Vec::new());
    }
    let hits = index.search(mode, query, k)?;
    Ok(hits
        .into_iter()
        .map(|h| {
            let e = index.entry(h.entry_id);
            Retrieved {
                candidate: CandidateResponse::new(
                    e.payload.next_customer_utterance.clone(),
                    CandidateSource::Retrieval,
                ),
                entry_id: h.entry_id,
                dialogue_id: e.payload.dialogue_id.clone(),
                score: h.score,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vindex::{build_index, IndexEntry, Payload};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn entry(v: Vec<f64>, reply: &str) -> IndexEntry<f64> {
        IndexEntry::new(
            v,
            Payload {
                dialogue_id: format!("d-{reply}"),
                turn_index: 1,
                next_customer_utterance: reply.into(),
            },
        )
    }

    #[test]
    fn empty_index_gives_nothing() {
        let idx = build_index::<f64>(3, vec![], false, 1).unwrap();
        assert!(retrieve_candidates(&idx, &[1.0, 0.0, 0.0], 3, SearchMode::Exact)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn single_entry() {
        let idx = build_index(2, vec![entry(vec![0.3, 0.4], "only")], false, 1).unwrap();
        let got = retrieve_candidates(&idx, &[1.0, 0.0], 3, SearchMode::Exact).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].candidate.text, "only");
    }

    #[test]
    fn exact_vector_comes_first_and_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let vecs: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let entries = vecs
            .iter()
            .enumerate()
            .map(|(i, v)| entry(v.clone(), &format!("r{i}")))
            .collect();
        let idx = build_index(8, entries, true, 9).unwrap();
        let got = retrieve_candidates(&idx, &vecs[7], 3, SearchMode::Exact).unwrap();
        assert_eq!(got[0].candidate.text, "r7");

        let q: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut brute: Vec<(f64, usize)> = vecs
            .iter()
            .enumerate()
            .map(|(i, v)| (crate::vecmath::cosine(&q, v).unwrap(), i))
            .collect();
        brute.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let got: Vec<String> = retrieve_candidates(&idx, &q, 3, SearchMode::Exact)
            .unwrap()
            .into_iter()
            .map(|r| r.candidate.text)
            .collect();
        let want: Vec<String> = brute[..3].iter().map(|(_, i)| format!("r{i}")).collect();
        assert_eq!(got, want);
    }
}
