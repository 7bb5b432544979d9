//! Cluster extraction: kernel density over neighbor weights, density-peak
//! linking gated by a similarity threshold, and union-find components.

use alloc::vec;
use alloc::vec::Vec;

use crate::graph::{Edge, WeightedGraph};
use crate::{math, Error, Result};

/// Per-node cluster id, contiguous from 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterAssignment(Vec<usize>);

impl ClusterAssignment {
    /// Relabels arbitrary ids so that clusters are numbered in order of their
    /// smallest member node.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut map: alloc::collections::BTreeMap<usize, usize> = Default::default();
        let ids = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Self(ids)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn num_clusters(&self) -> usize {
        self.0.iter().max().map_or(0, |m| m + 1)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_clusters()];
        for &c in &self.0 {
            sizes[c] += 1;
        }
        sizes
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DpcConfig {
    /// Neighbors contributing to each density.
    pub k_density: usize,
    pub sigma: f64,
    /// Outgoing links kept per node.
    pub max_connections: usize,
    /// Minimum edge weight for a link.
    pub link_threshold: f64,
}

impl DpcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::param("sigma", "must be positive and finite"));
        }
        if self.k_density == 0 {
            return Err(Error::param("k_density", "must be positive"));
        }
        if self.max_connections == 0 {
            return Err(Error::param("max_connections", "must be positive"));
        }
        Ok(())
    }
}

/// Density estimator behind the density-peak stage.
pub trait DensityEstimator {
    fn density(&self, g: &WeightedGraph) -> Result<Vec<f64>>;
}

/// `ρ_i = Σ exp(−(1 − w_ij) / σ)` over the `k` first non-self neighbors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelDensity {
    pub k: usize,
    pub sigma: f64,
}

impl DensityEstimator for KernelDensity {
    fn density(&self, g: &WeightedGraph) -> Result<Vec<f64>> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::param("sigma", "must be positive and finite"));
        }
        Ok((0..g.len())
            .map(|i| {
                g.edges(i)
                    .iter()
                    .filter(|e| e.to != i)
                    .take(self.k)
                    .map(|e| math::exp(-(1.0 - e.weight) / self.sigma))
                    .sum()
            })
            .collect())
    }
}

pub fn estimate_density(g: &WeightedGraph, cfg: &DpcConfig) -> Result<Vec<f64>> {
    KernelDensity { k: cfg.k_density, sigma: cfg.sigma }.density(g)
}

/// `(ρ, id)` order: higher density wins, ties go to the higher id.
#[inline]
fn uphill(density: &[f64], from: usize, to: usize) -> bool {
    match density[to].total_cmp(&density[from]) {
        core::cmp::Ordering::Greater => true,
        core::cmp::Ordering::Less => false,
        core::cmp::Ordering::Equal => to > from,
    }
}

/// Links every node to its heaviest neighbors of strictly higher density,
/// keeping at most `max_connections` links with weight at least
/// `link_threshold`. Local density maxima get no link.
pub fn peak_link(g: &WeightedGraph, density: &[f64], cfg: &DpcConfig) -> Result<Vec<(usize, usize)>> {
    cfg.validate()?;
    if density.len() != g.len() {
        return Err(Error::LengthMismatch { left: density.len(), right: g.len() });
    }
    let mut links = Vec::new();
    let mut cand: Vec<&Edge> = Vec::new();
    for i in 0..g.len() {
        cand.clear();
        cand.extend(
            g.edges(i).iter().filter(|e| e.to != i && e.weight >= cfg.link_threshold && uphill(density, i, e.to)),
        );
        cand.sort_by(|a, b| b.weight.total_cmp(&a.weight).then(a.to.cmp(&b.to)));
        links.extend(cand.iter().take(cfg.max_connections).map(|e| (i, e.to)));
    }
    Ok(links)
}

/// Union-find with path compression and union by size.
#[derive(Clone, Debug)]
pub struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            core::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }
}

/// Connected components of an undirected edge list over `n` nodes.
pub fn connected_components(edges: &[(usize, usize)], n: usize) -> Result<ClusterAssignment> {
    let mut dsu = DisjointSet::new(n);
    for &(a, b) in edges {
        for x in [a, b] {
            if x >= n {
                return Err(Error::IndexOutOfRange { index: x, len: n });
            }
        }
        dsu.union(a, b);
    }
    let roots: Vec<usize> = (0..n).map(|i| dsu.find(i)).collect();
    Ok(ClusterAssignment::from_labels(&roots))
}

/// Components over every non-self edge with weight at least `tau`.
pub fn threshold_baseline(g: &WeightedGraph, tau: f64) -> ClusterAssignment {
    let edges: Vec<(usize, usize)> = (0..g.len())
        .flat_map(|i| g.edges(i).iter().filter(move |e| e.to != i && e.weight >= tau).map(move |e| (i, e.to)))
        .collect();
    connected_components(&edges, g.len()).expect("edge endpoints come from the graph")
}

/// Density estimation, peak linking and components in one call.
pub fn density_peak_clusters(g: &WeightedGraph, cfg: &DpcConfig) -> Result<ClusterAssignment> {
    let density = estimate_density(g, cfg)?;
    let links = peak_link(g, &density, cfg)?;
    connected_components(&links, g.len())
}

pub fn count_singletons(c: &ClusterAssignment) -> usize {
    c.sizes().iter().filter(|&&s| s == 1).count()
}
