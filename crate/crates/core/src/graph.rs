//! Embedding storage, exact cosine kNN graphs, weighted graphs, and the
//! subgraph precision/recall measurements used to judge them.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{dot, Matrix};
use crate::{math, par, Error, Result};

/// Weight given to an edge removed by [`corrupt_subgraphs`]. It stays in the
/// graph as a candidate but falls below every valid cutoff.
pub const DROPPED_WEIGHT: f64 = -1.0;

/// Default number of query rows per block in [`build_knn`].
pub const DEFAULT_KNN_BLOCK: usize = 256;

/// `N × D` matrix of node features, one row per node.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet(Matrix);

impl EmbeddingSet {
    /// Wraps a row-major buffer after checking that every entry is finite.
    pub fn new(count: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_matrix(Matrix::new(count, dim, data)?)
    }

    pub fn from_matrix(m: Matrix) -> Result<Self> {
        if let Some(pos) = m.as_slice().iter().position(|v| !v.is_finite()) {
            let cols = m.cols().max(1);
            return Err(Error::NonFinite { row: pos / cols, col: pos % cols });
        }
        Ok(Self(m))
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.rows()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// Rows in a new order: row `r` of the result is row `order[r]` here.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self(self.0.select_rows(order))
    }
}

/// Scales every row to unit L2 norm.
pub fn normalize_rows(m: Matrix) -> Result<EmbeddingSet> {
    let mut m = EmbeddingSet::from_matrix(m)?.into_matrix();
    for r in 0..m.rows() {
        let row = m.row_mut(r);
        let n = math::sqrt(dot(row, row));
        if n == 0.0 {
            return Err(Error::ZeroRow { row: r });
        }
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    Ok(EmbeddingSet(m))
}

/// Cosine similarity of two unit vectors, clamped to `[-1, 1]`.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimMismatch { expected: u.len(), actual: v.len() });
    }
    Ok(dot(u, v).clamp(-1.0, 1.0))
}

/// Per-node identity or cluster ids. Ids need not be contiguous.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelVector(Vec<usize>);

impl LabelVector {
    pub fn new(labels: Vec<usize>) -> Self {
        Self(labels)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Maps ids onto `0..classes` in ascending id order.
    pub fn to_contiguous(&self) -> (Vec<usize>, usize) {
        let mut distinct = self.0.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let mapped = self.0.iter().map(|l| distinct.binary_search(l).unwrap_or(0)).collect();
        (mapped, distinct.len())
    }

    pub fn num_classes(&self) -> usize {
        self.to_contiguous().1
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub sim: f64,
}

/// Ordered neighbor lists of fixed length `k`; entry 0 is always the node
/// itself with similarity 1.
#[derive(Clone, Debug, PartialEq)]
pub struct KnnGraph {
    k: usize,
    entries: Vec<Neighbor>,
}

impl KnnGraph {
    /// Builds a graph from explicit lists, checking every invariant.
    pub fn from_lists(k: usize, lists: Vec<Vec<Neighbor>>) -> Result<Self> {
        let n = lists.len();
        if k == 0 || k > n {
            return Err(Error::InvalidK { k, n });
        }
        let mut entries = Vec::with_capacity(n * k);
        for (i, list) in lists.into_iter().enumerate() {
            if list.len() != k {
                return Err(Error::LengthMismatch { left: list.len(), right: k });
            }
            if list[0].id != i || list[0].sim != 1.0 {
                return Err(Error::param("knn", "entry 0 must be the node itself at 1.0"));
            }
            let mut seen: Vec<usize> = list.iter().map(|nb| nb.id).collect();
            seen.sort_unstable();
            if seen.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::param("knn", "duplicate neighbor id"));
            }
            for (r, nb) in list.iter().enumerate() {
                if nb.id >= n {
                    return Err(Error::IndexOutOfRange { index: nb.id, len: n });
                }
                if !(-1.0..=1.0).contains(&nb.sim) {
                    return Err(Error::param("knn", "similarity outside [-1, 1]"));
                }
                if r > 0 && nb.sim > list[r - 1].sim {
                    return Err(Error::param("knn", "similarities must be non-increasing"));
                }
            }
            entries.extend(list);
        }
        Ok(Self { k, entries })
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.entries.len() / self.k
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.entries[i * self.k..(i + 1) * self.k]
    }

    /// Keeps the first `k` entries of every list.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.k {
            return Err(Error::InvalidK { k, n: self.k });
        }
        let mut entries = Vec::with_capacity(self.len() * k);
        for i in 0..self.len() {
            entries.extend_from_slice(&self.neighbors(i)[..k]);
        }
        Ok(Self { k, entries })
    }
}

#[inline]
fn rank_order(a: &Neighbor, b: &Neighbor) -> Ordering {
    b.sim.total_cmp(&a.sim).then(a.id.cmp(&b.id))
}

/// Exact top-`k` cosine neighbors of every node, self first, ties broken by
/// ascending id.
pub fn build_knn(e: &EmbeddingSet, k: usize) -> Result<KnnGraph> {
    build_knn_blocked(e, k, DEFAULT_KNN_BLOCK)
}

/// [`build_knn`] with an explicit query block size. Peak scratch memory is
/// `block × N` similarities; the output does not depend on `block`.
pub fn build_knn_blocked(e: &EmbeddingSet, k: usize, block: usize) -> Result<KnnGraph> {
    let n = e.len();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    let block = block.max(1);
    let mut entries = vec![Neighbor { id: 0, sim: 0.0 }; n * k];
    par::for_each_chunk(&mut entries, block * k, |b, out| {
        let start = b * block;
        let rows = out.len() / k;
        let mut scratch: Vec<Neighbor> = Vec::with_capacity(n);
        for r in 0..rows {
            let i = start + r;
            let fi = e.row(i);
            scratch.clear();
            for j in 0..n {
                if j != i {
                    scratch.push(Neighbor { id: j, sim: dot(fi, e.row(j)).clamp(-1.0, 1.0) });
                }
            }
            let take = k - 1;
            if take > 0 {
                if take < scratch.len() {
                    scratch.select_nth_unstable_by(take - 1, rank_order);
                }
                scratch[..take].sort_unstable_by(rank_order);
            }
            let dst = &mut out[r * k..(r + 1) * k];
            dst[0] = Neighbor { id: i, sim: 1.0 };
            dst[1..].copy_from_slice(&scratch[..take]);
        }
    });
    Ok(KnnGraph { k, entries })
}

/// Per-node neighbor lists sorted by id, for `O(log k)` similarity lookups
/// restricted to the kNN lists.
#[derive(Clone, Debug)]
pub struct SimilarityIndex {
    k: usize,
    sorted: Vec<(usize, f64)>,
}

impl SimilarityIndex {
    pub fn new(knn: &KnnGraph) -> Self {
        let k = knn.k();
        let mut sorted = Vec::with_capacity(knn.len() * k);
        for i in 0..knn.len() {
            let start = sorted.len();
            sorted.extend(knn.neighbors(i).iter().map(|nb| (nb.id, nb.sim)));
            sorted[start..].sort_unstable_by_key(|p| p.0);
        }
        Self { k, sorted }
    }

    /// Similarity of `n` to `x` if `n ∈ K(x)`.
    #[inline]
    pub fn lookup(&self, x: usize, n: usize) -> Option<f64> {
        let list = &self.sorted[x * self.k..(x + 1) * self.k];
        list.binary_search_by_key(&n, |p| p.0).ok().map(|pos| list[pos].1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub to: usize,
    pub weight: f64,
}

/// Variable-length weighted adjacency lists (CSR layout). Holds raw
/// similarity graphs as well as linkage-probability graphs.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedGraph {
    offsets: Vec<usize>,
    edges: Vec<Edge>,
}

impl WeightedGraph {
    pub fn from_lists(lists: Vec<Vec<Edge>>) -> Result<Self> {
        let n = lists.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut edges = Vec::new();
        offsets.push(0);
        let mut ids = Vec::new();
        for list in lists {
            ids.clear();
            for e in &list {
                if e.to >= n {
                    return Err(Error::IndexOutOfRange { index: e.to, len: n });
                }
                if !e.weight.is_finite() {
                    return Err(Error::param("graph", "non-finite edge weight"));
                }
                ids.push(e.to);
            }
            ids.sort_unstable();
            if ids.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::param("graph", "duplicate neighbor"));
            }
            edges.extend(list);
            offsets.push(edges.len());
        }
        Ok(Self { offsets, edges })
    }

    /// The kNN graph with similarities as weights.
    pub fn from_knn(knn: &KnnGraph) -> Self {
        let offsets = (0..=knn.len()).map(|i| i * knn.k()).collect();
        let edges = knn.entries.iter().map(|nb| Edge { to: nb.id, weight: nb.sim }).collect();
        Self { offsets, edges }
    }

    /// Same topology as `knn` with weights replaced in list order.
    pub fn from_knn_weights(knn: &KnnGraph, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != knn.entries.len() {
            return Err(Error::LengthMismatch { left: weights.len(), right: knn.entries.len() });
        }
        let mut g = Self::from_knn(knn);
        for (e, w) in g.edges.iter_mut().zip(weights) {
            if !w.is_finite() {
                return Err(Error::param("graph", "non-finite edge weight"));
            }
            e.weight = w;
        }
        Ok(g)
    }

    /// Precision = recall = 1 starting point: self edges plus the
    /// same-label edges among each node's kNN list, all at weight 1.
    pub fn ground_truth(knn: &KnnGraph, gt: &LabelVector) -> Result<Self> {
        check_labels(knn.len(), gt)?;
        let lists = (0..knn.len())
            .map(|i| {
                knn.neighbors(i)
                    .iter()
                    .filter(|nb| nb.id == i || gt.get(nb.id) == gt.get(i))
                    .map(|nb| Edge { to: nb.id, weight: 1.0 })
                    .collect()
            })
            .collect();
        Self::from_lists(lists)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn edges(&self, i: usize) -> &[Edge] {
        &self.edges[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Keeps the first `k` entries of every list.
    pub fn truncated(&self, k: usize) -> Self {
        let lists = (0..self.len())
            .map(|i| {
                let e = self.edges(i);
                e[..k.min(e.len())].to_vec()
            })
            .collect::<Vec<_>>();
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        offsets.push(0);
        let mut edges = Vec::new();
        for l in lists {
            edges.extend(l);
            offsets.push(edges.len());
        }
        Self { offsets, edges }
    }

    pub fn to_lists(&self) -> Vec<Vec<Edge>> {
        (0..self.len()).map(|i| self.edges(i).to_vec()).collect()
    }
}

pub(crate) fn check_labels(n: usize, gt: &LabelVector) -> Result<()> {
    if gt.len() != n {
        return Err(Error::LengthMismatch { left: gt.len(), right: n });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubgraphQuality {
    pub precision: f64,
    pub recall: f64,
    /// Non-self edges at or above the cutoff.
    pub kept: usize,
    /// Kept edges joining same-label nodes.
    pub true_kept: usize,
    /// All same-label non-self edges present in the graph.
    pub true_total: usize,
}

/// Precision and recall of the edges kept at `cutoff`, counted over directed
/// non-self edges.
pub fn subgraph_quality(g: &WeightedGraph, gt: &LabelVector, cutoff: f64) -> Result<SubgraphQuality> {
    check_labels(g.len(), gt)?;
    let (mut kept, mut true_kept, mut true_total) = (0usize, 0usize, 0usize);
    for i in 0..g.len() {
        for e in g.edges(i) {
            if e.to == i {
                continue;
            }
            let same = gt.get(i) == gt.get(e.to);
            let keep = e.weight >= cutoff;
            true_total += same as usize;
            kept += keep as usize;
            true_kept += (same && keep) as usize;
        }
    }
    if kept == 0 {
        return Err(Error::Undefined("no edges kept at this cutoff"));
    }
    if true_total == 0 {
        return Err(Error::Undefined("graph has no same-label edges"));
    }
    Ok(SubgraphQuality {
        precision: true_kept as f64 / kept as f64,
        recall: true_kept as f64 / true_total as f64,
        kept,
        true_kept,
        true_total,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorruptionMode {
    /// Remove random true edges until recall reaches the target.
    DropRecall,
    /// Inject random wrong edges until precision reaches the target.
    DropPrecision,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Corruption {
    pub mode: CorruptionMode,
    pub target: f64,
    pub seed: u64,
    /// Edges with weight at or above this value count as kept.
    pub cutoff: f64,
}

/// Degrades a graph to a target recall or precision.
///
/// Removed edges stay in the graph at [`DROPPED_WEIGHT`] so recall can still
/// be measured against them; injected edges get weight 1. The random stream
/// depends only on the seed, so with a fixed seed lower targets corrupt a
/// superset of the edges touched by higher targets.
pub fn corrupt_subgraphs(g: &WeightedGraph, gt: &LabelVector, c: Corruption) -> Result<WeightedGraph> {
    check_labels(g.len(), gt)?;
    if !(c.target > 0.0 && c.target <= 1.0) {
        return Err(Error::param("target", "must lie in (0, 1]"));
    }
    if !(c.cutoff > DROPPED_WEIGHT && c.cutoff <= 1.0) {
        return Err(Error::param("cutoff", "must lie in (-1, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut lists = g.to_lists();
    let n = g.len();

    let mut true_kept = Vec::new();
    let (mut true_total, mut wrong_kept) = (0usize, 0usize);
    for (i, list) in lists.iter().enumerate() {
        for (pos, e) in list.iter().enumerate() {
            if e.to == i {
                continue;
            }
            let same = gt.get(i) == gt.get(e.to);
            let keep = e.weight >= c.cutoff;
            if same {
                true_total += 1;
                if keep {
                    true_kept.push((i, pos));
                }
            } else if keep {
                wrong_kept += 1;
            }
        }
    }

    match c.mode {
        CorruptionMode::DropRecall => {
            let want = libm::round(c.target * true_total as f64) as usize;
            if true_kept.len() > want {
                true_kept.shuffle(&mut rng);
                for &(i, pos) in &true_kept[..true_kept.len() - want] {
                    lists[i][pos].weight = DROPPED_WEIGHT;
                }
            }
        }
        CorruptionMode::DropPrecision => {
            let t = true_kept.len() as f64;
            let want = libm::round(t * (1.0 - c.target) / c.target) as usize;
            let mut needed = want.saturating_sub(wrong_kept);
            let mut attempts = 0usize;
            let budget = 1000 + needed.saturating_mul(1000);
            while needed > 0 {
                attempts += 1;
                if attempts > budget || n < 2 {
                    return Err(Error::param("target", "not enough cross-label pairs to inject"));
                }
                let i = rng.random_range(0..n);
                let j = rng.random_range(0..n);
                if i == j || gt.get(i) == gt.get(j) {
                    continue;
                }
                match lists[i].iter_mut().find(|e| e.to == j) {
                    Some(e) if e.weight >= c.cutoff => continue,
                    Some(e) => e.weight = 1.0,
                    None => lists[i].push(Edge { to: j, weight: 1.0 }),
                }
                needed -= 1;
            }
        }
    }
    WeightedGraph::from_lists(lists)
}
