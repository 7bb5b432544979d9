//! Clustering scores and the subgraph-corruption sweep.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::cluster::{count_singletons, threshold_baseline, ClusterAssignment};
use crate::graph::{
    corrupt_subgraphs, subgraph_quality, Corruption, CorruptionMode, KnnGraph, LabelVector, WeightedGraph,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FScoreReport {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
    /// Set when a denominator was empty and the affected value was reported as 0.
    pub degenerate: bool,
}

impl FScoreReport {
    fn from_parts(precision: Option<f64>, recall: Option<f64>) -> Self {
        let degenerate = precision.is_none() || recall.is_none();
        let (p, r) = (precision.unwrap_or(0.0), recall.unwrap_or(0.0));
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        Self { precision: p, recall: r, f, degenerate }
    }
}

fn check_lengths(pred: &ClusterAssignment, gt: &LabelVector) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch { left: pred.len(), right: gt.len() });
    }
    Ok(())
}

struct Contingency {
    cells: BTreeMap<(usize, usize), u64>,
    cluster_sizes: BTreeMap<usize, u64>,
    label_sizes: BTreeMap<usize, u64>,
}

fn contingency(pred: &ClusterAssignment, gt: &LabelVector) -> Contingency {
    let mut c = Contingency { cells: BTreeMap::new(), cluster_sizes: BTreeMap::new(), label_sizes: BTreeMap::new() };
    for (&p, &g) in pred.as_slice().iter().zip(gt.as_slice()) {
        *c.cells.entry((p, g)).or_default() += 1;
        *c.cluster_sizes.entry(p).or_default() += 1;
        *c.label_sizes.entry(g).or_default() += 1;
    }
    c
}

fn pairs(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Pairwise precision/recall over unordered node pairs, computed from
/// cluster-by-label contingency counts.
pub fn pairwise_f(pred: &ClusterAssignment, gt: &LabelVector) -> Result<FScoreReport> {
    check_lengths(pred, gt)?;
    let c = contingency(pred, gt);
    let tp: u64 = c.cells.values().map(|&n| pairs(n)).sum();
    let pred_pairs: u64 = c.cluster_sizes.values().map(|&n| pairs(n)).sum();
    let gt_pairs: u64 = c.label_sizes.values().map(|&n| pairs(n)).sum();
    let ratio = |den: u64| (den > 0).then(|| tp as f64 / den as f64);
    Ok(FScoreReport::from_parts(ratio(pred_pairs), ratio(gt_pairs)))
}

/// BCubed precision/recall averaged over nodes; each node belongs to its
/// own cluster and label sets.
pub fn bcubed_f(pred: &ClusterAssignment, gt: &LabelVector) -> Result<FScoreReport> {
    check_lengths(pred, gt)?;
    let n = pred.len();
    if n == 0 {
        return Ok(FScoreReport::from_parts(None, None));
    }
    let c = contingency(pred, gt);
    let (mut p, mut r) = (0.0, 0.0);
    for (&(cl, lb), &cell) in &c.cells {
        let cell = cell as f64;
        // every node in the cell contributes cell/|cluster| and cell/|label|
        p += cell * cell / c.cluster_sizes[&cl] as f64;
        r += cell * cell / c.label_sizes[&lb] as f64;
    }
    Ok(FScoreReport::from_parts(Some(p / n as f64), Some(r / n as f64)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub levels: Vec<f64>,
    /// Edge-keeping cutoff used both for corruption and for the threshold clustering.
    pub cutoff: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub mode: CorruptionMode,
    pub level: f64,
    /// Measured subgraph precision/recall after corruption.
    pub subgraph_precision: f64,
    pub subgraph_recall: f64,
    pub pairwise: FScoreReport,
    pub bcubed: FScoreReport,
    pub singletons: usize,
}

/// Corrupts the label-consistent part of `knn` to each target level in both
/// modes and clusters the result with the threshold baseline.
///
/// Corruptions share one seed, so lower levels drop (or inject) a superset
/// of the edges touched at higher levels.
pub fn figure2_sweep(knn: &KnnGraph, gt: &LabelVector, cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    let base = WeightedGraph::ground_truth(knn, gt)?;
    let mut rows = Vec::with_capacity(2 * cfg.levels.len());
    for mode in [CorruptionMode::DropPrecision, CorruptionMode::DropRecall] {
        for &level in &cfg.levels {
            let g =
                corrupt_subgraphs(&base, gt, Corruption { mode, target: level, seed: cfg.seed, cutoff: cfg.cutoff })?;
            let q = subgraph_quality(&g, gt, cfg.cutoff);
            let (sp, sr) = q.map_or((0.0, 0.0), |q| (q.precision, q.recall));
            let pred = threshold_baseline(&g, cfg.cutoff);
            rows.push(SweepRow {
                mode,
                level,
                subgraph_precision: sp,
                subgraph_recall: sr,
                pairwise: pairwise_f(&pred, gt)?,
                bcubed: bcubed_f(&pred, gt)?,
                singletons: count_singletons(&pred),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn identical_partition_scores_one() {
        let gt = LabelVector::new(vec![4, 4, 9, 9, 9, 1]);
        let pred = ClusterAssignment::from_labels(gt.as_slice());
        for r in [pairwise_f(&pred, &gt).unwrap(), bcubed_f(&pred, &gt).unwrap()] {
            assert_eq!((r.precision, r.recall, r.f), (1.0, 1.0, 1.0));
            assert!(!r.degenerate);
        }
    }

    #[test]
    fn pairwise_hand_count() {
        // gt {a,b,c},{d}; pred {a,b},{c,d}
        let gt = LabelVector::new(vec![0, 0, 0, 1]);
        let pred = ClusterAssignment::from_labels(&[0, 0, 1, 1]);
        let r = pairwise_f(&pred, &gt).unwrap();
        assert!(close(r.precision, 0.5));
        assert!(close(r.recall, 1.0 / 3.0));
        assert!(close(r.f, 0.4));
    }

    #[test]
    fn bcubed_all_singletons_closed_form() {
        let n = 7;
        let gt = LabelVector::new(vec![3; n]);
        let pred = ClusterAssignment::from_labels(&(0..n).collect::<Vec<_>>());
        let r = bcubed_f(&pred, &gt).unwrap();
        assert!(close(r.precision, 1.0));
        assert!(close(r.recall, 1.0 / n as f64));
        assert!(close(r.f, 2.0 / (n as f64 + 1.0)));
    }

    #[test]
    fn all_singletons_flagged_degenerate() {
        let gt = LabelVector::new(vec![0, 1, 2]);
        let pred = ClusterAssignment::from_labels(&[0, 1, 2]);
        let r = pairwise_f(&pred, &gt).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.f, 0.0);
    }

    #[test]
    fn length_mismatch_rejected() {
        let gt = LabelVector::new(vec![0, 1]);
        let pred = ClusterAssignment::from_labels(&[0]);
        assert!(pairwise_f(&pred, &gt).is_err());
        assert!(bcubed_f(&pred, &gt).is_err());
    }
}
