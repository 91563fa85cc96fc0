//! Intent scene mining: HDBSCAN over dialogue embeddings and selection of
//! representative scripts per cluster.
//!
//! The clustering runs in five stages: core distances, mutual reachability,
//! a Prim minimum spanning tree over mutual reachability (O(n²), no distance
//! matrix is materialized), the condensed cluster tree, and excess-of-mass
//! cluster extraction.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Dialogue, DialogueScript, Role};
use crate::textenc::TextEncoder;
use crate::vecmath::euclidean;
use crate::Scalar;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClusterError {
    #[error("no points to cluster")]
    Empty,
    #[error("point {index} has dimension {got}, expected {expected}")]
    DimMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("point {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("{labels} labels for {items} items")]
    Misaligned { labels: usize, items: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct ClusterParams {
    pub min_cluster_size: usize,
    /// Defaults to `min_cluster_size`.
    pub min_samples: Option<usize>,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            min_cluster_size: 5,
            min_samples: None,
        }
    }
}

impl ClusterParams {
    pub fn new(min_cluster_size: usize) -> Self {
        ClusterParams {
            min_cluster_size,
            min_samples: None,
        }
    }

    pub fn min_samples(&self) -> usize {
        self.min_samples.unwrap_or(self.min_cluster_size)
    }

    fn validate(&self) -> Result<(), ClusterError> {
        if self.min_cluster_size < 2 {
            return Err(ClusterError::BadParams("min_cluster_size must be >= 2".into()));
        }
        if self.min_samples() < 1 {
            return Err(ClusterError::BadParams("min_samples must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MstEdge<T> {
    pub a: usize,
    pub b: usize,
    pub weight: T,
}

/// One row of the condensed tree. `child` below the point count is a point,
/// otherwise a cluster id; `lambda` is the density at which the child left
/// `parent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CondensedNode<T> {
    pub parent: usize,
    pub child: usize,
    pub lambda: T,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterResult<T> {
    /// Cluster per point, `-1` for noise; clusters numbered `0..C`.
    pub labels: Vec<i32>,
    /// Excess-of-mass stability of each selected cluster, by label.
    pub stabilities: Vec<T>,
    pub condensed_tree: Vec<CondensedNode<T>>,
    pub mst: Vec<MstEdge<T>>,
}

impl<T> ClusterResult<T> {
    pub fn num_clusters(&self) -> usize {
        self.labels.iter().filter(|&&l| l >= 0).map(|&l| l as usize + 1).max().unwrap_or(0)
    }

    pub fn members(&self, label: i32) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == label).collect()
    }
}

fn validate_points<T: Scalar>(points: &[Vec<T>]) -> Result<usize, ClusterError> {
    let first = points.first().ok_or(ClusterError::Empty)?;
    let dim = first.len();
    for (index, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(ClusterError::DimMismatch {
                index,
                expected: dim,
                got: p.len(),
            });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(ClusterError::NonFinite(index));
        }
    }
    Ok(dim)
}

/// Distance from each point to its `k`-th nearest neighbour, counting the
/// point itself as the first. `k` is clamped to the number of points.
pub fn core_distances<T: Scalar>(points: &[Vec<T>], k: usize) -> Vec<T> {
    let n = points.len();
    let k = k.clamp(1, n.max(1));
    let mut row = vec![T::zero(); n];
    points
        .iter()
        .map(|p| {
            for (j, q) in points.iter().enumerate() {
                row[j] = euclidean(p, q);
            }
            let (_, kth, _) = row.select_nth_unstable_by(k - 1, |a, b| {
                a.partial_cmp(b).unwrap_or(Ordering::Equal)
            });
            *kth
        })
        .collect()
}

pub fn mutual_reachability<T: Scalar>(core_a: T, core_b: T, distance: T) -> T {
    core_a.max(core_b).max(distance)
}

/// Prim's algorithm over mutual reachability distances. Edges come out in
/// the order vertices join the tree.
pub fn mst_prim<T: Scalar>(points: &[Vec<T>], core: &[T]) -> Vec<MstEdge<T>> {
    let n = points.len();
    if n < 2 {
        return Vec::new();
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![T::infinity(); n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0usize;
    in_tree[0] = true;
    for _ in 1..n {
        let mut next = usize::MAX;
        let mut next_w = T::infinity();
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let d = mutual_reachability(core[current], core[j], euclidean(&points[current], &points[j]));
            if d < best[j] {
                best[j] = d;
                from[j] = current;
            }
            if next == usize::MAX || best[j] < next_w {
                next = j;
                next_w = best[j];
            }
        }
        in_tree[next] = true;
        edges.push(MstEdge {
            a: from[next],
            b: next,
            weight: next_w,
        });
        current = next;
    }
    edges
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

/// Single-linkage merge: node `n + i` joins `left` and `right` at `distance`.
#[derive(Debug, Clone, Copy)]
struct Merge<T> {
    left: usize,
    right: usize,
    distance: T,
    size: usize,
}

fn single_linkage<T: Scalar>(n: usize, mst: &[MstEdge<T>]) -> Vec<Merge<T>> {
    let mut edges: Vec<MstEdge<T>> = mst.to_vec();
    edges.sort_by(|x, y| {
        x.weight
            .partial_cmp(&y.weight)
            .unwrap_or(Ordering::Equal)
            .then(x.a.min(x.b).cmp(&y.a.min(y.b)))
            .then(x.a.max(x.b).cmp(&y.a.max(y.b)))
    });
    // Union-find over points; `node_of[root]` tracks the dendrogram node.
    let mut uf = UnionFind::new(n);
    let mut node_of: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for e in edges {
        let ra = uf.find(e.a);
        let rb = uf.find(e.b);
        let (left, right) = (node_of[ra], node_of[rb]);
        let size = uf.size[ra] + uf.size[rb];
        let (big, small) = if uf.size[ra] >= uf.size[rb] { (ra, rb) } else { (rb, ra) };
        uf.parent[small] = big;
        uf.size[big] = size;
        node_of[big] = n + merges.len();
        merges.push(Merge {
            left,
            right,
            distance: e.weight,
            size,
        });
    }
    merges
}

fn to_lambda<T: Scalar>(distance: T) -> T {
    T::one() / distance.max(T::epsilon())
}

fn condense<T: Scalar>(n: usize, merges: &[Merge<T>], min_cluster_size: usize) -> Vec<CondensedNode<T>> {
    let root = n + merges.len() - 1;
    let size_of = |node: usize| if node < n { 1 } else { merges[node - n].size };
    let leaves_under = |node: usize| -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            if x < n {
                out.push(x);
            } else {
                let m = &merges[x - n];
                stack.push(m.right);
                stack.push(m.left);
            }
        }
        out
    };

    let mut relabel: HashMap<usize, usize> = HashMap::new();
    relabel.insert(root, n);
    let mut next_label = n + 1;
    let mut tree = Vec::new();
    let mut queue = VecDeque::from([root]);
    while let Some(node) = queue.pop_front() {
        if node < n {
            continue;
        }
        let m = merges[node - n];
        let parent = relabel[&node];
        let lambda = to_lambda(m.distance);
        let (ls, rs) = (size_of(m.left), size_of(m.right));
        let left_big = ls >= min_cluster_size;
        let right_big = rs >= min_cluster_size;
        if left_big && right_big {
            for (child, size) in [(m.left, ls), (m.right, rs)] {
                relabel.insert(child, next_label);
                tree.push(CondensedNode {
                    parent,
                    child: next_label,
                    lambda,
                    size,
                });
                next_label += 1;
                queue.push_back(child);
            }
        } else {
            for (child, big) in [(m.left, left_big), (m.right, right_big)] {
                if big {
                    relabel.insert(child, parent);
                    queue.push_back(child);
                } else {
                    for p in leaves_under(child) {
                        tree.push(CondensedNode {
                            parent,
                            child: p,
                            lambda,
                            size: 1,
                        });
                    }
                }
            }
        }
    }
    tree
}

struct Extraction<T> {
    selected: Vec<usize>,
    stability: BTreeMap<usize, T>,
}

fn extract<T: Scalar>(n: usize, tree: &[CondensedNode<T>], min_cluster_size: usize) -> Extraction<T> {
    let root = n;
    let mut birth: BTreeMap<usize, T> = BTreeMap::new();
    birth.insert(root, T::zero());
    let mut children: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for row in tree.iter().filter(|r| r.child >= n) {
        birth.insert(row.child, row.lambda);
        children.entry(row.parent).or_default().push(row.child);
    }
    let mut stability: BTreeMap<usize, T> = birth.keys().map(|&c| (c, T::zero())).collect();
    for row in tree {
        let b = birth[&row.parent];
        let gain = if row.lambda > b {
            (row.lambda - b) * T::of(row.size as f64)
        } else {
            T::zero()
        };
        *stability.get_mut(&row.parent).unwrap() = stability[&row.parent] + gain;
    }
    let original = stability.clone();

    let root_has_children = children.contains_key(&root);
    if !root_has_children {
        let total: usize = tree.iter().filter(|r| r.parent == root).map(|r| r.size).sum();
        let selected = if total >= min_cluster_size { vec![root] } else { vec![] };
        return Extraction {
            selected,
            stability: original,
        };
    }

    // Cluster ids grow with depth, so descending order visits children first.
    let mut is_selected: BTreeMap<usize, bool> = BTreeMap::new();
    let mut propagated = stability;
    for &c in birth.keys().rev() {
        if c == root {
            continue;
        }
        let child_sum = children
            .get(&c)
            .map(|cs| cs.iter().fold(T::zero(), |acc, k| acc + propagated[k]))
            .unwrap_or(T::zero());
        if children.contains_key(&c) && child_sum > propagated[&c] {
            is_selected.insert(c, false);
            propagated.insert(c, child_sum);
        } else {
            is_selected.insert(c, true);
            let mut stack: Vec<usize> = children.get(&c).cloned().unwrap_or_default();
            while let Some(d) = stack.pop() {
                is_selected.insert(d, false);
                if let Some(cs) = children.get(&d) {
                    stack.extend(cs);
                }
            }
        }
    }
    Extraction {
        selected: is_selected.into_iter().filter(|(_, s)| *s).map(|(c, _)| c).collect(),
        stability: original,
    }
}

/// Clusters `points` (Euclidean distance) with HDBSCAN.
pub fn hdbscan<T: Scalar>(points: &[Vec<T>], params: &ClusterParams) -> Result<ClusterResult<T>, ClusterError> {
    params.validate()?;
    validate_points(points)?;
    let n = points.len();
    if n == 1 {
        return Ok(ClusterResult {
            labels: vec![-1],
            stabilities: vec![],
            condensed_tree: vec![],
            mst: vec![],
        });
    }
    let core = core_distances(points, params.min_samples());
    let mst = mst_prim(points, &core);
    let merges = single_linkage(n, &mst);
    let tree = condense(n, &merges, params.min_cluster_size);
    let ex = extract(n, &tree, params.min_cluster_size);

    let label_of: HashMap<usize, i32> = ex
        .selected
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, i as i32))
        .collect();
    let parent_of: HashMap<usize, usize> = tree
        .iter()
        .filter(|r| r.child >= n)
        .map(|r| (r.child, r.parent))
        .collect();
    let root_selected = ex.selected == [n];
    let root_max_lambda = tree
        .iter()
        .filter(|r| r.parent == n)
        .map(|r| r.lambda)
        .fold(T::neg_infinity(), T::max);

    let mut labels = vec![-1; n];
    for row in tree.iter().filter(|r| r.child < n) {
        if root_selected {
            if row.lambda >= root_max_lambda {
                labels[row.child] = 0;
            }
            continue;
        }
        let mut c = row.parent;
        loop {
            if let Some(&l) = label_of.get(&c) {
                labels[row.child] = l;
                break;
            }
            match parent_of.get(&c) {
                Some(&p) => c = p,
                None => break,
            }
        }
    }
    let stabilities = ex.selected.iter().map(|c| ex.stability[c]).collect();
    Ok(ClusterResult {
        labels,
        stabilities,
        condensed_tree: tree,
        mst,
    })
}

/// Clustering feature text: the first two customer turns.
pub fn intent_text(d: &Dialogue) -> String {
    d.texts_by(Role::Customer).take(2).collect::<Vec<_>>().join(" ")
}

/// Embeds each dialogue's intent text (unit-length or zero vectors).
pub fn dialogue_embeddings(dialogues: &[Dialogue], encoder: &TextEncoder) -> Vec<Vec<f64>> {
    dialogues
        .iter()
        .map(|d| encoder.embed(&intent_text(d)).vector)
        .collect()
}

/// Normalizes a raw dialogue into script form: leading agent turns dropped,
/// consecutive same-role turns joined with a space. `None` if the result is
/// not a valid script.
pub fn normalize_script(d: &Dialogue, scene: &str) -> Option<DialogueScript> {
    let mut merged: Vec<(Role, String)> = Vec::new();
    for t in d.turns().iter().skip_while(|t| t.role == Role::Agent) {
        match merged.last_mut() {
            Some((role, text)) if *role == t.role => {
                text.push(' ');
                text.push_str(t.text.trim());
            }
            _ => merged.push((t.role, t.text.trim().to_string())),
        }
    }
    DialogueScript::new(d.id(), scene, merged).ok()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scene_id: String,
    pub label: i32,
    pub representative_scripts: Vec<DialogueScript>,
    pub member_ids: Vec<String>,
}

pub fn scene_id_for(label: i32) -> String {
    format!("scene-{label}")
}

/// Per cluster, the `per_cluster` members nearest the centroid (ties by
/// dialogue id) that normalize into valid scripts.
pub fn select_representatives(
    result: &ClusterResult<f64>,
    dialogues: &[Dialogue],
    embeddings: &[Vec<f64>],
    per_cluster: usize,
) -> Result<Vec<Scene>, ClusterError> {
    if result.labels.len() != dialogues.len() || embeddings.len() != dialogues.len() {
        return Err(ClusterError::Misaligned {
            labels: result.labels.len(),
            items: dialogues.len().min(embeddings.len()),
        });
    }
    let mut scenes = Vec::new();
    for label in 0..result.num_clusters() as i32 {
        let members = result.members(label);
        if members.is_empty() {
            continue;
        }
        let dim = embeddings[members[0]].len();
        let mut centroid = vec![0.0; dim];
        for &m in &members {
            for (c, x) in centroid.iter_mut().zip(&embeddings[m]) {
                *c += x;
            }
        }
        for c in centroid.iter_mut() {
            *c /= members.len() as f64;
        }
        let mut ranked: Vec<(f64, &str, usize)> = members
            .iter()
            .map(|&m| (euclidean(&embeddings[m], &centroid), dialogues[m].id(), m))
            .collect();
        ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(b.1)));
        let scene_id = scene_id_for(label);
        let reps: Vec<DialogueScript> = ranked
            .iter()
            .filter_map(|&(_, _, m)| normalize_script(&dialogues[m], &scene_id))
            .take(per_cluster)
            .collect();
        if reps.is_empty() {
            continue;
        }
        scenes.push(Scene {
            scene_id,
            label,
            representative_scripts: reps,
            member_ids: members.iter().map(|&m| dialogues[m].id().to_string()).collect(),
        });
    }
    Ok(scenes)
}

/// One line of the cluster report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterReportLine {
    pub scene_id: String,
    pub cluster: i32,
    pub size: usize,
    pub stability: f64,
    pub representatives: Vec<String>,
}

pub fn cluster_report(result: &ClusterResult<f64>, scenes: &[Scene]) -> Vec<ClusterReportLine> {
    scenes
        .iter()
        .map(|s| ClusterReportLine {
            scene_id: s.scene_id.clone(),
            cluster: s.label,
            size: s.member_ids.len(),
            stability: result.stabilities[s.label as usize],
            representatives: s.representative_scripts.iter().map(|r| r.id.clone()).collect(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blobs(seed: u64, per: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = Vec::new();
        for center in [[0.0, 0.0], [2.0, 0.0]] {
            for _ in 0..per {
                pts.push(vec![
                    center[0] + rng.random_range(-0.08..0.08),
                    center[1] + rng.random_range(-0.08..0.08),
                ]);
            }
        }
        pts
    }

    #[test]
    fn too_few_points_is_all_noise() {
        let pts = vec![vec![0.0], vec![0.1], vec![0.2]];
        let r = hdbscan(&pts, &ClusterParams::new(5)).unwrap();
        assert_eq!(r.labels, vec![-1, -1, -1]);
        let r = hdbscan(&[vec![1.0]], &ClusterParams::new(2)).unwrap();
        assert_eq!(r.labels, vec![-1]);
    }

    #[test]
    fn identical_points_form_one_cluster() {
        let pts = vec![vec![0.5, 0.5]; 12];
        let r = hdbscan(&pts, &ClusterParams::new(5)).unwrap();
        assert_eq!(r.labels, vec![0; 12]);
        assert!(r.stabilities.iter().all(|s| *s >= 0.0 && f64::is_finite(*s)));
    }

    #[test]
    fn errors() {
        assert_eq!(hdbscan::<f64>(&[], &ClusterParams::default()), Err(ClusterError::Empty));
        assert!(matches!(
            hdbscan(&[vec![0.0], vec![0.0, 1.0]], &ClusterParams::default()),
            Err(ClusterError::DimMismatch { index: 1, .. })
        ));
        assert!(hdbscan(&[vec![0.0]], &ClusterParams::new(1)).is_err());
    }

    #[test]
    fn two_blobs_separate() {
        let pts = blobs(1, 30);
        let r = hdbscan(&pts, &ClusterParams::new(5)).unwrap();
        assert_eq!(r.num_clusters(), 2);
        let a = r.labels[0];
        let b = r.labels[30];
        assert_ne!(a, b);
        assert!(r.labels[..30].iter().filter(|&&l| l == a).count() >= 28);
        assert!(r.labels[30..].iter().filter(|&&l| l == b).count() >= 28);
        assert!(r.stabilities.iter().all(|s| *s >= 0.0));
    }

    #[test]
    fn cluster_sizes_respect_minimum() {
        let pts = blobs(4, 25);
        for mcs in [2, 3, 5, 8] {
            let r = hdbscan(&pts, &ClusterParams::new(mcs)).unwrap();
            for l in 0..r.num_clusters() as i32 {
                assert!(r.members(l).len() >= mcs);
            }
        }
    }

    #[test]
    fn core_distance_counts_self() {
        let pts = vec![vec![0.0], vec![1.0], vec![3.0]];
        assert_eq!(core_distances(&pts, 1), vec![0.0, 0.0, 0.0]);
        assert_eq!(core_distances(&pts, 2), vec![1.0, 1.0, 2.0]);
        assert_eq!(core_distances(&pts, 10), vec![3.0, 2.0, 3.0]);
    }

    #[test]
    fn works_for_f32() {
        let pts: Vec<Vec<f32>> = blobs(2, 20)
            .into_iter()
            .map(|p| p.into_iter().map(|x| x as f32).collect())
            .collect();
        let r = hdbscan(&pts, &ClusterParams::new(5)).unwrap();
        assert_eq!(r.num_clusters(), 2);
    }

    fn dlg(id: &str, turns: &[(Role, &str)]) -> Dialogue {
        Dialogue::new(id, None, turns.iter().map(|(r, t)| (*r, t.to_string())).collect()).unwrap()
    }

    #[test]
    fn normalization_merges_and_drops_leading_agent() {
        let d = dlg(
            "x",
            &[
                (Role::Agent, "welcome"),
                (Role::Customer, "hi"),
                (Role::Customer, "my order"),
                (Role::Agent, "sure"),
            ],
        );
        let s = normalize_script(&d, "scene-0").unwrap();
        let texts: Vec<&str> = s.turns.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, vec!["hi my order", "sure"]);
        assert_eq!(s.scene, "scene-0");
        let only_agent = dlg("y", &[(Role::Agent, "a"), (Role::Agent, "b")]);
        assert!(normalize_script(&only_agent, "s").is_none());
    }

    fn fake_result(labels: Vec<i32>) -> ClusterResult<f64> {
        let c = labels.iter().copied().max().unwrap_or(-1) + 1;
        ClusterResult {
            labels,
            stabilities: vec![1.0; c as usize],
            condensed_tree: vec![],
            mst: vec![],
        }
    }

    fn conv(id: &str) -> Dialogue {
        dlg(id, &[(Role::Customer, "q"), (Role::Agent, "a")])
    }

    #[test]
    fn single_member_cluster_is_its_own_representative() {
        let r = fake_result(vec![0]);
        let scenes = select_representatives(&r, &[conv("only")], &[vec![1.0, 0.0]], 3).unwrap();
        assert_eq!(scenes.len(), 1);
        assert_eq!(scenes[0].representative_scripts[0].id, "only");
    }

    #[test]
    fn centroid_point_selected_first() {
        let r = fake_result(vec![0, 0, 0, -1]);
        let ds = [conv("a"), conv("b"), conv("c"), conv("noise")];
        let emb = vec![vec![-1.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.0], vec![9.0, 9.0]];
        let scenes = select_representatives(&r, &ds, &emb, 2).unwrap();
        let ids: Vec<&str> = scenes[0].representative_scripts.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, vec!["b", "a"]);
        assert_eq!(scenes[0].member_ids, vec!["a", "b", "c"]);
    }

    #[test]
    fn selection_matches_brute_force_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 20;
        let labels: Vec<i32> = (0..n).map(|i| (i % 3) as i32 - i32::from(i % 7 == 0)).collect();
        let ds: Vec<Dialogue> = (0..n).map(|i| conv(&format!("d{i:02}"))).collect();
        let emb: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let r = fake_result(labels.clone());
        let scenes = select_representatives(&r, &ds, &emb, 3).unwrap();
        for s in &scenes {
            let members: Vec<usize> = (0..n).filter(|&i| labels[i] == s.label).collect();
            let mut c = [0.0; 3];
            for &m in &members {
                for k in 0..3 {
                    c[k] += emb[m][k] / members.len() as f64;
                }
            }
            let mut brute: Vec<(f64, usize)> = members
                .iter()
                .map(|&m| ((0..3).map(|k| (emb[m][k] - c[k]).powi(2)).sum::<f64>(), m))
                .collect();
            brute.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let want: Vec<String> = brute.iter().take(3).map(|b| format!("d{:02}", b.1)).collect();
            let got: Vec<String> = s.representative_scripts.iter().map(|r| r.id.clone()).collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn no_clusters_gives_no_scenes() {
        let r = fake_result(vec![-1, -1]);
        let scenes = select_representatives(&r, &[conv("a"), conv("b")], &[vec![0.0], vec![1.0]], 1).unwrap();
        assert!(scenes.is_empty());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn mutual_reachability_symmetric_and_dominates(
            pts in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 2..30),
            k in 1usize..6,
        ) {
            let core = core_distances(&pts, k);
            for i in 0..pts.len() {
                for j in 0..pts.len() {
                    let d = euclidean(&pts[i], &pts[j]);
                    let ab = mutual_reachability(core[i], core[j], d);
                    let ba = mutual_reachability(core[j], core[i], euclidean(&pts[j], &pts[i]));
                    prop_assert_eq!(ab, ba);
                    prop_assert!(ab >= d);
                }
            }
        }

        #[test]
        fn labels_invariant_under_permutation(seed in any::<u64>()) {
            let pts = blobs(seed, 15);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
            let mut perm: Vec<usize> = (0..pts.len()).collect();
            for i in (1..perm.len()).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| pts[i].clone()).collect();
            let a = hdbscan(&pts, &ClusterParams::new(4)).unwrap();
            let b = hdbscan(&shuffled, &ClusterParams::new(4)).unwrap();
            let mut rename: HashMap<i32, i32> = HashMap::new();
            for (pos, &orig) in perm.iter().enumerate() {
                let la = a.labels[orig];
                let lb = b.labels[pos];
                prop_assert_eq!(la == -1, lb == -1);
                if la >= 0 {
                    let e = rename.entry(la).or_insert(lb);
                    prop_assert_eq!(*e, lb);
                }
            }
        }
    }
}
