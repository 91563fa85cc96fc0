//! Vector index over encoded dialogue contexts, each mapped to the customer
//! utterance that followed it.
//!
//! Exact search is a brute-force cosine scan. Approximate search hashes every
//! vector with random-hyperplane signatures (several tables) and ranks the
//! union of the probed buckets exactly.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vecmath::{cosine, dot};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("dimension mismatch: index has {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("k must be >= 1")]
    ZeroK,
    #[error("entry {0}: next customer utterance is empty")]
    EmptyUtterance(usize),
    #[error("index was built without an approximate structure")]
    NoApproxStructure,
    #[error("invalid hashing parameters: {0}")]
    BadParams(String),
    #[error("index file format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payload {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub next_customer_utterance: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry<T> {
    /// Position in the index; assigned by [`build_index`].
    pub entry_id: u32,
    pub vector: Vec<T>,
    pub payload: Payload,
}

impl<T> IndexEntry<T> {
    pub fn new(vector: Vec<T>, payload: Payload) -> Self {
        IndexEntry {
            entry_id: 0,
            vector,
            payload,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchHit<T> {
    pub entry_id: u32,
    pub score: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    #[default]
    Exact,
    Approx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LshParams {
    pub tables: usize,
    pub bits: usize,
    /// Buckets within this Hamming distance of the query signature are probed.
    pub probe_radius: usize,
}

impl Default for LshParams {
    fn default() -> Self {
        LshParams {
            tables: 8,
            bits: 16,
            probe_radius: 1,
        }
    }
}

impl LshParams {
    fn validate(&self) -> Result<(), IndexError> {
        if self.tables == 0 || self.bits == 0 || self.bits > 32 {
            return Err(IndexError::BadParams(format!(
                "tables={} bits={} (need tables >= 1, 1 <= bits <= 32)",
                self.tables, self.bits
            )));
        }
        if self.probe_radius > 2 {
            return Err(IndexError::BadParams("probe_radius must be <= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct HyperplaneTables<T> {
    params: LshParams,
    /// tables × bits × dim normals.
    planes: Vec<T>,
    /// Per table: signature → entry ids in insertion order.
    buckets: Vec<HashMap<u32, Vec<u32>>>,
}

impl<T: Scalar> HyperplaneTables<T> {
    fn generate(params: LshParams, dim: usize, seed: u64) -> Vec<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..params.tables * params.bits * dim)
            .map(|_| {
                let x: f64 = StandardNormal.sample(&mut rng);
                T::of(x)
            })
            .collect()
    }

    fn from_planes(params: LshParams, planes: Vec<T>, entries: &[IndexEntry<T>], dim: usize) -> Self {
        let mut t = HyperplaneTables {
            params,
            planes,
            buckets: vec![HashMap::new(); params.tables],
        };
        for e in entries {
            for table in 0..params.tables {
                let sig = t.signature(table, &e.vector, dim);
                t.buckets[table].entry(sig).or_default().push(e.entry_id);
            }
        }
        t
    }

    fn signature(&self, table: usize, v: &[T], dim: usize) -> u32 {
        let bits = self.params.bits;
        let mut sig = 0u32;
        for b in 0..bits {
            let start = (table * bits + b) * dim;
            if dot(&self.planes[start..start + dim], v) >= T::zero() {
                sig |= 1 << b;
            }
        }
        sig
    }

    fn probe(&self, query: &[T], dim: usize) -> BTreeSet<u32> {
        let bits = self.params.bits;
        let mut out = BTreeSet::new();
        for table in 0..self.params.tables {
            let sig = self.signature(table, query, dim);
            let mut keys = vec![sig];
            if self.params.probe_radius >= 1 {
                keys.extend((0..bits).map(|b| sig ^ (1 << b)));
            }
            if self.params.probe_radius >= 2 {
                for i in 0..bits {
                    for j in i + 1..bits {
                        keys.push(sig ^ (1 << i) ^ (1 << j));
                    }
                }
            }
            for key in keys {
                if let Some(ids) = self.buckets[table].get(&key) {
                    out.extend(ids.iter().copied());
                }
            }
        }
        out
    }
}

/// Append-only index; immutable after [`build_index`].
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex<T> {
    dim: usize,
    seed: u64,
    entries: Vec<IndexEntry<T>>,
    lsh: Option<HyperplaneTables<T>>,
}

/// Builds an index with the default hashing parameters when `approx` is set.
pub fn build_index<T: Scalar>(
    dim: usize,
    entries: Vec<IndexEntry<T>>,
    approx: bool,
    seed: u64,
) -> Result<VectorIndex<T>, IndexError> {
    build_index_with(dim, entries, approx.then(LshParams::default), seed)
}

pub fn build_index_with<T: Scalar>(
    dim: usize,
    mut entries: Vec<IndexEntry<T>>,
    lsh: Option<LshParams>,
    seed: u64,
) -> Result<VectorIndex<T>, IndexError> {
    for (i, e) in entries.iter_mut().enumerate() {
        if e.vector.len() != dim {
            return Err(IndexError::DimMismatch {
                expected: dim,
                got: e.vector.len(),
            });
        }
        if e.payload.next_customer_utterance.trim().is_empty() {
            return Err(IndexError::EmptyUtterance(i));
        }
        e.entry_id = i as u32;
    }
    let lsh = match lsh {
        Some(params) => {
            params.validate()?;
            let planes = HyperplaneTables::generate(params, dim, seed);
            Some(HyperplaneTables::from_planes(params, planes, &entries, dim))
        }
        None => None,
    };
    Ok(VectorIndex {
        dim,
        seed,
        entries,
        lsh,
    })
}

impl<T: Scalar> VectorIndex<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn has_approx(&self) -> bool {
        self.lsh.is_some()
    }

    pub fn entries(&self) -> &[IndexEntry<T>] {
        &self.entries
    }

    pub fn entry(&self, id: u32) -> &IndexEntry<T> {
        &self.entries[id as usize]
    }

    /// Signature of every entry in every table, for determinism checks.
    pub fn signature_table(&self) -> Option<Vec<Vec<u32>>> {
        let lsh = self.lsh.as_ref()?;
        Some(
            self.entries
                .iter()
                .map(|e| {
                    (0..lsh.params.tables)
                        .map(|t| lsh.signature(t, &e.vector, self.dim))
                        .collect()
                })
                .collect(),
        )
    }

    fn check_query(&self, query: &[T], k: usize) -> Result<(), IndexError> {
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        if query.len() != self.dim {
            return Err(IndexError::DimMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        Ok(())
    }

    fn rank(&self, query: &[T], ids: impl Iterator<Item = u32>, k: usize) -> Vec<SearchHit<T>> {
        let mut hits: Vec<SearchHit<T>> = ids
            .map(|id| SearchHit {
                entry_id: id,
                score: cosine(query, &self.entries[id as usize].vector).unwrap_or(T::zero()),
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.entry_id.cmp(&b.entry_id))
        });
        hits.truncate(k);
        hits
    }

    /// Top-`k` by cosine, descending, ties to the smaller entry id.
    pub fn search_exact(&self, query: &[T], k: usize) -> Result<Vec<SearchHit<T>>, IndexError> {
        self.check_query(query, k)?;
        Ok(self.rank(query, 0..self.entries.len() as u32, k))
    }

    /// Top-`k` among entries sharing a probed bucket with the query.
    pub fn search_approx(&self, query: &[T], k: usize) -> Result<Vec<SearchHit<T>>, IndexError> {
        self.check_query(query, k)?;
        let lsh = self.lsh.as_ref().ok_or(IndexError::NoApproxStructure)?;
        let candidates = lsh.probe(query, self.dim);
        Ok(self.rank(query, candidates.into_iter(), k))
    }

    pub fn search(
        &self,
        mode: SearchMode,
        query: &[T],
        k: usize,
    ) -> Result<Vec<SearchHit<T>>, IndexError> {
        match mode {
            SearchMode::Exact => self.search_exact(query, k),
            SearchMode::Approx => self.search_approx(query, k),
        }
    }
}

const INDEX_MAGIC: [u8; 4] = *b"ACVX";
const INDEX_VERSION: u32 = 1;

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str<R: Read>(r: &mut R) -> Result<String, IndexError> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    if len > 1 << 24 {
        return Err(IndexError::Format(format!("string length {len}")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| IndexError::Format("invalid utf-8".into()))
}

impl VectorIndex<f64> {
    /// Layout, little endian: magic "ACVX", version u32, dim u64, count u64,
    /// seed u64, has_hashing u8, [tables u32, bits u32, probe_radius u32],
    /// entries {dialogue_id str, turn_index u64, utterance str, vector f64×dim},
    /// [hyperplanes f64 × tables×bits×dim]. Strings are u32-length-prefixed.
    /// Buckets are rebuilt from the hyperplanes on load.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), IndexError> {
        w.write_all(&INDEX_MAGIC)?;
        w.write_u32::<LittleEndian>(INDEX_VERSION)?;
        w.write_u64::<LittleEndian>(self.dim as u64)?;
        w.write_u64::<LittleEndian>(self.entries.len() as u64)?;
        w.write_u64::<LittleEndian>(self.seed)?;
        w.write_u8(u8::from(self.lsh.is_some()))?;
        if let Some(lsh) = &self.lsh {
            w.write_u32::<LittleEndian>(lsh.params.tables as u32)?;
            w.write_u32::<LittleEndian>(lsh.params.bits as u32)?;
            w.write_u32::<LittleEndian>(lsh.params.probe_radius as u32)?;
        }
        for e in &self.entries {
            write_str(&mut w, &e.payload.dialogue_id)?;
            w.write_u64::<LittleEndian>(e.payload.turn_index as u64)?;
            write_str(&mut w, &e.payload.next_customer_utterance)?;
            for x in &e.vector {
                w.write_f64::<LittleEndian>(*x)?;
            }
        }
        if let Some(lsh) = &self.lsh {
            for x in &lsh.planes {
                w.write_f64::<LittleEndian>(*x)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, IndexError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != INDEX_MAGIC {
            return Err(IndexError::Format("bad magic".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != INDEX_VERSION {
            return Err(IndexError::Format(format!("unsupported version {version}")));
        }
        let dim = r.read_u64::<LittleEndian>()? as usize;
        let n = r.read_u64::<LittleEndian>()? as usize;
        let seed = r.read_u64::<LittleEndian>()?;
        let params = match r.read_u8()? {
            0 => None,
            1 => Some(LshParams {
                tables: r.read_u32::<LittleEndian>()? as usize,
                bits: r.read_u32::<LittleEndian>()? as usize,
                probe_radius: r.read_u32::<LittleEndian>()? as usize,
            }),
            other => return Err(IndexError::Format(format!("bad hashing flag {other}"))),
        };
        let mut entries = Vec::with_capacity(n.min(1 << 20));
        for i in 0..n {
            let dialogue_id = read_str(&mut r)?;
            let turn_index = r.read_u64::<LittleEndian>()? as usize;
            let next_customer_utterance = read_str(&mut r)?;
            let mut vector = vec![0.0; dim];
            r.read_f64_into::<LittleEndian>(&mut vector)?;
            entries.push(IndexEntry {
                entry_id: i as u32,
                vector,
                payload: Payload {
                    dialogue_id,
                    turn_index,
                    next_customer_utterance,
                },
            });
        }
        let lsh = match params {
            Some(p) => {
                p.validate()?;
                let mut planes = vec![0.0; p.tables * p.bits * dim];
                r.read_f64_into::<LittleEndian>(&mut planes)?;
                Some(HyperplaneTables::from_planes(p, planes, &entries, dim))
            }
            None => None,
        };
        Ok(VectorIndex {
            dim,
            seed,
            entries,
            lsh,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn payload(i: usize) -> Payload {
        Payload {
            dialogue_id: format!("d{i}"),
            turn_index: 2,
            next_customer_utterance: format!("reply {i}"),
        }
    }

    fn random_entries(n: usize, dim: usize, seed: u64) -> Vec<IndexEntry<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let v = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                IndexEntry::new(v, payload(i))
            })
            .collect()
    }

    #[test]
    fn empty_index_returns_nothing() {
        let idx = build_index::<f64>(3, vec![], true, 1).unwrap();
        assert!(idx.is_empty());
        assert!(idx.search_exact(&[1.0, 0.0, 0.0], 3).unwrap().is_empty());
        assert!(idx.search_approx(&[1.0, 0.0, 0.0], 3).unwrap().is_empty());
    }

    #[test]
    fn reports_size_and_assigns_dense_ids() {
        let idx = build_index(4, random_entries(17, 4, 1), false, 0).unwrap();
        assert_eq!(idx.len(), 17);
        assert!(idx.entries().iter().enumerate().all(|(i, e)| e.entry_id == i as u32));
    }

    #[test]
    fn mixed_dims_rejected() {
        let mut e = random_entries(3, 4, 1);
        e[1].vector.pop();
        assert!(matches!(
            build_index(4, e, false, 0),
            Err(IndexError::DimMismatch { expected: 4, got: 3 })
        ));
    }

    #[test]
    fn query_errors() {
        let idx = build_index(4, random_entries(3, 4, 1), false, 0).unwrap();
        assert!(matches!(idx.search_exact(&[1.0; 3], 1), Err(IndexError::DimMismatch { .. })));
        assert!(matches!(idx.search_exact(&[1.0; 4], 0), Err(IndexError::ZeroK)));
        assert!(matches!(idx.search_approx(&[1.0; 4], 1), Err(IndexError::NoApproxStructure)));
    }

    #[test]
    fn stored_vector_is_found_with_score_one() {
        let entries = random_entries(30, 8, 2);
        let q = entries[7].vector.clone();
        let idx = build_index(8, entries, true, 9).unwrap();
        let hit = idx.search_exact(&q, 1).unwrap()[0];
        assert_eq!(hit.entry_id, 7);
        assert!((hit.score - 1.0).abs() < 1e-12);
        let approx = idx.search_approx(&q, 3).unwrap();
        assert!(approx.iter().any(|h| h.entry_id == 7));
    }

    #[test]
    fn identical_vectors_tie_break_by_id() {
        let v = vec![0.3, 0.4];
        let entries = vec![
            IndexEntry::new(vec![-1.0, 0.0], payload(0)),
            IndexEntry::new(v.clone(), payload(1)),
            IndexEntry::new(v.clone(), payload(2)),
        ];
        let idx = build_index(2, entries, false, 0).unwrap();
        let ids: Vec<u32> = idx.search_exact(&v, 2).unwrap().iter().map(|h| h.entry_id).collect();
        assert_eq!(ids, vec![1, 2]);
    }

    #[test]
    fn zero_query_returns_id_order() {
        let idx = build_index(3, random_entries(5, 3, 4), false, 0).unwrap();
        let hits = idx.search_exact(&[0.0; 3], 5).unwrap();
        assert_eq!(hits.iter().map(|h| h.entry_id).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
        assert!(hits.iter().all(|h| h.score == 0.0));
    }

    #[test]
    fn matches_brute_force_sort() {
        let entries = random_entries(50, 12, 5);
        let idx = build_index(12, entries.clone(), false, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let q: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut oracle: Vec<(f64, u32)> = entries
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    let d: f64 = q.iter().zip(&e.vector).map(|(a, b)| a * b).sum();
                    let nq = q.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let ne = e.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
                    (d / (nq * ne), i as u32)
                })
                .collect();
            oracle.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let got: Vec<u32> = idx.search_exact(&q, 3).unwrap().iter().map(|h| h.entry_id).collect();
            let want: Vec<u32> = oracle.iter().take(3).map(|o| o.1).collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn signatures_are_deterministic_under_seed() {
        let a = build_index(6, random_entries(40, 6, 3), true, 11).unwrap();
        let b = build_index(6, random_entries(40, 6, 3), true, 11).unwrap();
        let c = build_index(6, random_entries(40, 6, 3), true, 12).unwrap();
        assert_eq!(a.signature_table(), b.signature_table());
        assert_ne!(a.signature_table(), c.signature_table());
    }

    #[test]
    fn k_larger_than_pool_is_fine() {
        let idx = build_index(6, random_entries(4, 6, 3), true, 11).unwrap();
        let q = idx.entry(0).vector.clone();
        let hits = idx.search_approx(&q, 100).unwrap();
        assert!(!hits.is_empty() && hits.len() <= 4);
    }

    #[test]
    fn persistence_round_trip_preserves_results() {
        let idx = build_index(8, random_entries(60, 8, 8), true, 21).unwrap();
        let mut buf = Vec::new();
        idx.write_to(&mut buf).unwrap();
        let back = VectorIndex::read_from(&buf[..]).unwrap();
        assert_eq!(back, idx);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let q: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert_eq!(back.search_exact(&q, 3).unwrap(), idx.search_exact(&q, 3).unwrap());
            assert_eq!(back.search_approx(&q, 3).unwrap(), idx.search_approx(&q, 3).unwrap());
        }
    }

    #[test]
    fn generic_over_f32() {
        let entries: Vec<IndexEntry<f32>> = (0..10)
            .map(|i| IndexEntry::new(vec![i as f32, 1.0], payload(i)))
            .collect();
        let idx = build_index(2, entries, true, 3).unwrap();
        assert_eq!(idx.search_exact(&[9.0, 1.0], 1).unwrap()[0].entry_id, 9);
    }

    proptest! {
        #[test]
        fn full_search_is_a_sorted_permutation(seed in any::<u64>(), n in 1usize..40) {
            let idx = build_index(5, random_entries(n, 5, seed), true, seed).unwrap();
            let q: Vec<f64> = random_entries(1, 5, seed ^ 0xabc)[0].vector.clone();
            let hits = idx.search_exact(&q, n).unwrap();
            let mut ids: Vec<u32> = hits.iter().map(|h| h.entry_id).collect();
            prop_assert!(hits.windows(2).all(|w| w[0].score >= w[1].score));
            ids.sort();
            prop_assert_eq!(ids, (0..n as u32).collect::<Vec<_>>());
            let approx = idx.search_approx(&q, 3).unwrap();
            prop_assert!(approx.windows(2).all(|w| w[0].score >= w[1].score));
            prop_assert!(approx.iter().all(|h| (h.entry_id as usize) < n));
        }
    }
}
