//! End-to-end fit and predict: kNN, linkage adjustment, GCN aggregation and
//! density-peak clustering.

use alloc::vec::Vec;

use crate::cluster::{density_peak_clusters, threshold_baseline, ClusterAssignment};
use crate::config::PipelineConfig;
use crate::gcn::{aggregate, build_adjacency, train_gcn, GcnEpochLog, GcnModel, SparseAdjacency};
use crate::graph::{build_knn, EmbeddingSet, KnnGraph, LabelVector, WeightedGraph};
use crate::linker::{adjust_graph, best_similarity_cutoff, train_nasa, EpochLog, NasaModel};
use crate::Result;

/// Where the GCN subgraphs come from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SubgraphSource {
    /// Linkage probabilities from a trained predictor, cut at `t3`.
    Linker,
    /// Raw cosine similarities cut at the given threshold.
    RawSimilarity { threshold: f64 },
}

#[derive(Clone, Debug)]
pub struct FittedPipeline {
    pub source: SubgraphSource,
    pub nasa: Option<NasaModel>,
    pub gcn: GcnModel,
    pub nasa_log: Vec<EpochLog>,
    pub gcn_log: Vec<GcnEpochLog>,
}

#[derive(Clone, Debug)]
pub struct Prediction {
    pub knn: KnnGraph,
    /// Subgraph weights the GCN adjacency was cut from.
    pub weights: WeightedGraph,
    pub adjacency: SparseAdjacency,
    pub aggregated: EmbeddingSet,
    pub clusters: ClusterAssignment,
}

fn gcn_adjacency(
    source: SubgraphSource,
    nasa: Option<&NasaModel>,
    e: &EmbeddingSet,
    knn: &KnnGraph,
    k_gcn: usize,
    t3: f64,
) -> Result<(WeightedGraph, SparseAdjacency)> {
    let (weights, cut) = match (source, nasa) {
        (SubgraphSource::Linker, Some(model)) => (adjust_graph(model, e, knn)?, t3),
        (SubgraphSource::RawSimilarity { threshold }, _) => (WeightedGraph::from_knn(knn), threshold),
        (SubgraphSource::Linker, None) => {
            return Err(crate::Error::ConfigMismatch(alloc::string::String::from(
                "linker subgraphs need a trained linkage model",
            )))
        }
    };
    let truncated = weights.truncated(k_gcn);
    let adj = build_adjacency(&truncated, cut);
    Ok((weights, adj))
}

/// Trains the linkage predictor (unless the source is raw similarity) and
/// the GCN on labeled training embeddings.
pub fn fit(e: &EmbeddingSet, gt: &LabelVector, cfg: &PipelineConfig, source: SubgraphSource) -> Result<FittedPipeline> {
    cfg.validate()?;
    let knn = build_knn(e, cfg.nasa.k.min(e.len()))?;
    let (nasa, nasa_log) = match source {
        SubgraphSource::Linker => {
            let (m, log) = train_nasa(e, &knn, gt, &cfg.nasa)?;
            (Some(m), log)
        }
        SubgraphSource::RawSimilarity { .. } => (None, Vec::new()),
    };
    let (_, adj) = gcn_adjacency(source, nasa.as_ref(), e, &knn, cfg.k_gcn_train, cfg.t3_train)?;
    let (gcn, gcn_log) = train_gcn(e, &adj, gt, &cfg.gcn)?;
    Ok(FittedPipeline { source, nasa, gcn, nasa_log, gcn_log })
}

/// Clusters aggregated features: kNN over them, kernel density, peak
/// linking and connected components.
pub fn cluster_aggregated(agg: &EmbeddingSet, cfg: &PipelineConfig) -> Result<ClusterAssignment> {
    let k = (cfg.dpc_k + 1).min(agg.len());
    let knn = build_knn(agg, k)?;
    density_peak_clusters(&WeightedGraph::from_knn(&knn), &cfg.dpc())
}

pub fn predict(fitted: &FittedPipeline, e: &EmbeddingSet, cfg: &PipelineConfig) -> Result<Prediction> {
    cfg.validate()?;
    let knn = build_knn(e, cfg.nasa.k.min(e.len()))?;
    let (weights, adjacency) =
        gcn_adjacency(fitted.source, fitted.nasa.as_ref(), e, &knn, cfg.k_gcn_test, cfg.t3_test)?;
    let aggregated = aggregate(&fitted.gcn, e, &adjacency)?;
    let clusters = cluster_aggregated(&aggregated, cfg)?;
    Ok(Prediction { knn, weights, adjacency, aggregated, clusters })
}

/// Raw-similarity subgraphs cut where training pairs are best separated.
pub fn calibrated_raw_source(e: &EmbeddingSet, gt: &LabelVector, cfg: &PipelineConfig) -> Result<SubgraphSource> {
    let knn = build_knn(e, cfg.nasa.k.min(e.len()))?;
    let (threshold, _) = best_similarity_cutoff(&knn, gt)?;
    Ok(SubgraphSource::RawSimilarity { threshold })
}

/// Connected components of the raw kNN graph cut at `tau`.
pub fn threshold_clusters(e: &EmbeddingSet, k: usize, tau: f64) -> Result<ClusterAssignment> {
    let knn = build_knn(e, k.min(e.len()))?;
    Ok(threshold_baseline(&WeightedGraph::from_knn(&knn), tau))
}
