//! Per-pair inputs of the linkage predictor: enhanced feature vectors built
//! from neighbor means, and structural vectors describing the enclosed
//! subgraph around a pair.

use alloc::vec;
use alloc::vec::Vec;

use crate::graph::{check_labels, EmbeddingSet, KnnGraph, LabelVector, SimilarityIndex};
use crate::linalg::Matrix;
use crate::{Error, Result};

/// Mean of each node's kNN neighbors with similarity at least `t1`.
///
/// The node itself sits at rank 0 with similarity 1, so the averaged set is
/// never empty. The mean is not re-normalized.
pub fn enhance_embeddings(e: &EmbeddingSet, knn: &KnnGraph, t1: f64) -> Result<EmbeddingSet> {
    if knn.len() != e.len() {
        return Err(Error::LengthMismatch { left: knn.len(), right: e.len() });
    }
    if !(t1 > -1.0 && t1 <= 1.0) {
        return Err(Error::param("t1", "must lie in (-1, 1]"));
    }
    let d = e.dim();
    let mut out = Matrix::zeros(e.len(), d);
    for i in 0..e.len() {
        let row = out.row_mut(i);
        let mut count = 0usize;
        for nb in knn.neighbors(i).iter().filter(|nb| nb.sim >= t1) {
            for (o, v) in row.iter_mut().zip(e.row(nb.id)) {
                *o += v;
            }
            count += 1;
        }
        let inv = 1.0 / count as f64;
        for o in row.iter_mut() {
            *o *= inv;
        }
    }
    EmbeddingSet::from_matrix(out)
}

fn check_pair(n: usize, i: usize, j: usize) -> Result<()> {
    for index in [i, j] {
        if index >= n {
            return Err(Error::IndexOutOfRange { index, len: n });
        }
    }
    if i == j {
        return Err(Error::param("pair", "i and j must differ"));
    }
    Ok(())
}

/// `[f_i | f'_i | f_j | f'_j]`, length `4·D`.
pub fn enhanced_pair(e: &EmbeddingSet, enh: &EmbeddingSet, i: usize, j: usize) -> Result<Vec<f64>> {
    check_pair(e.len(), i, j)?;
    if enh.len() != e.len() || enh.dim() != e.dim() {
        return Err(Error::DimMismatch { expected: e.dim(), actual: enh.dim() });
    }
    let mut out = vec![0.0; 4 * e.dim()];
    write_enhanced_pair(e, enh, i, j, &mut out);
    Ok(out)
}

pub(crate) fn write_enhanced_pair(e: &EmbeddingSet, enh: &EmbeddingSet, i: usize, j: usize, out: &mut [f64]) {
    let d = e.dim();
    out[..d].copy_from_slice(e.row(i));
    out[d..2 * d].copy_from_slice(enh.row(i));
    out[2 * d..3 * d].copy_from_slice(e.row(j));
    out[3 * d..4 * d].copy_from_slice(enh.row(j));
}

/// `[f_i | f_j]`, the plain pair feature.
pub(crate) fn write_original_pair(e: &EmbeddingSet, i: usize, j: usize, out: &mut [f64]) {
    let d = e.dim();
    out[..d].copy_from_slice(e.row(i));
    out[d..2 * d].copy_from_slice(e.row(j));
}

/// How enclosed-subgraph nodes are turned into scalars.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeLabeling {
    /// Averaged thresholded similarity to both centrals plus hop order.
    Distance,
    /// Hop order alone.
    OrderOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SortOrder {
    Ascending,
    Descending,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubgraphParams {
    pub t2: f64,
    pub k1: usize,
    pub k2: usize,
    pub dist_max: f64,
    pub labeling: NodeLabeling,
    pub sort: SortOrder,
}

impl SubgraphParams {
    /// Length of the structural feature vector.
    pub fn width(&self) -> usize {
        structural_width(self.k1, self.k2)
    }
}

/// `2·(k1 + k1·k2) + 2`: two centrals, `k1` hop-1 and `k1·k2` hop-2 slots
/// per central.
pub fn structural_width(k1: usize, k2: usize) -> usize {
    2 * (k1 + k1 * k2) + 2
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SubgraphNode {
    pub id: usize,
    /// 0 for the centrals, 1 for hop-1, 2 for hop-2.
    pub order: u8,
}

/// Node set of the enclosed subgraph of a pair, sorted by node id.
#[derive(Clone, Debug, PartialEq)]
pub struct EnclosedSubgraph {
    pub centrals: (usize, usize),
    pub nodes: Vec<SubgraphNode>,
}

/// Collects the hop-1 and hop-2 neighborhood of `(i, j)`.
///
/// Hop-1 takes, for each central, its `k1` nearest neighbors other than the
/// two centrals whose similarity is at least `t2`. Hop-2 takes, for each
/// hop-1 node, its `k2` nearest other neighbors above `t2`. A node reached on
/// several hops keeps its smallest order.
pub fn enclosed_subgraph(i: usize, j: usize, knn: &KnnGraph, params: &SubgraphParams) -> Result<EnclosedSubgraph> {
    check_pair(knn.len(), i, j)?;
    let mut nodes = Vec::with_capacity(params.width());
    nodes.push(SubgraphNode { id: i, order: 0 });
    nodes.push(SubgraphNode { id: j, order: 0 });
    let mut hop1 = Vec::with_capacity(2 * params.k1);
    for c in [i, j] {
        hop1.extend(
            knn.neighbors(c)
                .iter()
                .filter(|nb| nb.id != i && nb.id != j)
                .take(params.k1)
                .filter(|nb| nb.sim >= params.t2)
                .map(|nb| nb.id),
        );
    }
    for &c in &hop1 {
        nodes.push(SubgraphNode { id: c, order: 1 });
        nodes.extend(
            knn.neighbors(c)
                .iter()
                .filter(|nb| nb.id != c)
                .take(params.k2)
                .filter(|nb| nb.sim >= params.t2)
                .map(|nb| SubgraphNode { id: nb.id, order: 2 }),
        );
    }
    nodes.sort_unstable_by_key(|n| (n.id, n.order));
    nodes.dedup_by_key(|n| n.id);
    Ok(EnclosedSubgraph { centrals: (i, j), nodes })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabeledNode {
    pub id: usize,
    pub order: u8,
    pub dist: f64,
}

/// Assigns `dist_n = (dist_in + dist_jn) / 2 + O_n` to every subgraph node.
///
/// `dist_xn` is the similarity of `n` to central `x` when it is known (that
/// is, `n ∈ K(x)`, or `n` is `x` itself, or `n` is the other central) and at
/// least `t2`; otherwise it is `dist_max`.
pub fn label_nodes(sub: &EnclosedSubgraph, index: &SimilarityIndex, params: &SubgraphParams) -> Vec<LabeledNode> {
    let (i, j) = sub.centrals;
    let s_ij = index.lookup(i, j).or_else(|| index.lookup(j, i));
    let known = |x: usize, n: usize| -> Option<f64> {
        if x == n {
            Some(1.0)
        } else if (x == i && n == j) || (x == j && n == i) {
            s_ij
        } else {
            index.lookup(x, n)
        }
    };
    let thresholded = |s: Option<f64>| match s {
        Some(s) if s >= params.t2 => s,
        _ => params.dist_max,
    };
    sub.nodes
        .iter()
        .map(|n| {
            let order = f64::from(n.order);
            let dist = match params.labeling {
                NodeLabeling::OrderOnly => order,
                NodeLabeling::Distance => (thresholded(known(i, n.id)) + thresholded(known(j, n.id))) / 2.0 + order,
            };
            LabeledNode { id: n.id, order: n.order, dist }
        })
        .collect()
}

/// Sorted node labels truncated or zero-padded to exactly `params.width()`.
pub fn structural_feature(sub: &EnclosedSubgraph, index: &SimilarityIndex, params: &SubgraphParams) -> Vec<f64> {
    let mut out = vec![0.0; params.width()];
    write_structural_feature(sub, index, params, &mut out);
    out
}

pub(crate) fn write_structural_feature(
    sub: &EnclosedSubgraph,
    index: &SimilarityIndex,
    params: &SubgraphParams,
    out: &mut [f64],
) {
    let mut labeled = label_nodes(sub, index, params);
    match params.sort {
        SortOrder::Ascending => labeled.sort_unstable_by(|a, b| a.dist.total_cmp(&b.dist).then(a.id.cmp(&b.id))),
        SortOrder::Descending => labeled.sort_unstable_by(|a, b| b.dist.total_cmp(&a.dist).then(a.id.cmp(&b.id))),
    }
    out.fill(0.0);
    for (o, n) in out.iter_mut().zip(&labeled) {
        *o = n.dist;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairSample {
    pub i: usize,
    pub j: usize,
    /// `Some(true)` when both nodes share a ground-truth label.
    pub label: Option<bool>,
}

/// One sample per non-self kNN entry, ordered by node then rank.
pub fn generate_pairs<'a>(
    knn: &'a KnnGraph,
    gt: Option<&'a LabelVector>,
) -> Result<impl Iterator<Item = PairSample> + 'a> {
    if let Some(gt) = gt {
        check_labels(knn.len(), gt)?;
    }
    Ok((0..knn.len()).flat_map(move |i| {
        knn.neighbors(i).iter().filter(move |nb| nb.id != i).map(move |nb| PairSample {
            i,
            j: nb.id,
            label: gt.map(|gt| gt.get(i) == gt.get(nb.id)),
        })
    }))
}
