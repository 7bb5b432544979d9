//! The linkage predictor: a feature branch over enhanced pair features, a
//! neighborhood branch over structural features, and a linear fusion head
//! producing two-class logits.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::features::{
    enclosed_subgraph, enhance_embeddings, generate_pairs, structural_width, write_enhanced_pair, write_original_pair,
    write_structural_feature, NodeLabeling, PairSample, SortOrder, SubgraphParams,
};
use crate::graph::{check_labels, EmbeddingSet, KnnGraph, LabelVector, SimilarityIndex, WeightedGraph};
use crate::linalg::Matrix;
use crate::nn::{softmax, softmax_cross_entropy, LayerSpec, LrSchedule, Mlp, Mode, Sgd, DEFAULT_LEAKY_SLOPE};
use crate::{par, Error, Result};

/// Pairs per inference batch.
pub const INFERENCE_BATCH: usize = 256;

/// Which inputs the predictor sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinkerVariant {
    /// Feature branch on `[f_i | f_j]` only.
    PairOnly,
    /// Feature branch on the enhanced pair feature only.
    Enhanced,
    /// Both branches, structural nodes labeled by hop order alone.
    OrderLabels,
    /// Both branches with distance-based node labels.
    Full,
}

impl LinkerVariant {
    pub fn uses_structure(self) -> bool {
        matches!(self, Self::OrderLabels | Self::Full)
    }

    pub fn code(self) -> u8 {
        match self {
            Self::PairOnly => 0,
            Self::Enhanced => 1,
            Self::OrderLabels => 2,
            Self::Full => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => Self::PairOnly,
            1 => Self::Enhanced,
            2 => Self::OrderLabels,
            3 => Self::Full,
            _ => return Err(Error::param("variant", format!("unknown code {code}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NasaConfig {
    pub t1: f64,
    pub t2: f64,
    pub k: usize,
    pub k1: usize,
    pub k2: usize,
    pub dist_max: f64,
    pub sort: SortOrder,
    pub variant: LinkerVariant,
    pub fd_hidden: Vec<usize>,
    pub nd_hidden: Vec<usize>,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: f64,
    pub seed: u64,
    /// Reweights the loss so both pair classes carry equal total weight.
    pub balance_classes: bool,
}

impl NasaConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("t1", self.t1), ("t2", self.t2)] {
            if !(-1.0..=1.0).contains(&t) {
                return Err(Error::param(name, "must lie in [-1, 1]"));
            }
        }
        if self.k < 2 {
            return Err(Error::param("k", "need at least one neighbor besides self"));
        }
        if self.k1 > self.k {
            return Err(Error::param("k1", "must not exceed k"));
        }
        if self.batch_size < 2 {
            return Err(Error::param("batch_size", "must be at least 2"));
        }
        if self.fd_hidden.is_empty() || (self.variant.uses_structure() && self.nd_hidden.is_empty()) {
            return Err(Error::param("hidden", "branch widths must be non-empty"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::param("dropout", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn subgraph_params(&self) -> SubgraphParams {
        SubgraphParams {
            t2: self.t2,
            k1: self.k1,
            k2: self.k2,
            dist_max: self.dist_max,
            labeling: if self.variant == LinkerVariant::OrderLabels {
                NodeLabeling::OrderOnly
            } else {
                NodeLabeling::Distance
            },
            sort: self.sort,
        }
    }

    pub fn structural_width(&self) -> usize {
        structural_width(self.k1, self.k2)
    }
}

/// Trained linkage predictor plus the feature settings it was trained with.
#[derive(Clone, Debug)]
pub struct NasaModel {
    pub fd: Mlp,
    pub nd: Option<Mlp>,
    pub fusion: Mlp,
    pub config: NasaConfig,
    dim: usize,
}

impl NasaModel {
    /// Randomly initialized model for `dim`-dimensional embeddings.
    pub fn new(dim: usize, config: NasaConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let fd_in = if config.variant == LinkerVariant::PairOnly { 2 * dim } else { 4 * dim };
        let fd = Mlp::lbr_stack(fd_in, &config.fd_hidden, DEFAULT_LEAKY_SLOPE, config.dropout, &mut rng)?;
        let nd = if config.variant.uses_structure() {
            Some(Mlp::lbr_stack(
                config.structural_width(),
                &config.nd_hidden,
                DEFAULT_LEAKY_SLOPE,
                config.dropout,
                &mut rng,
            )?)
        } else {
            None
        };
        let fused = fd.output_width().unwrap_or(fd_in) + nd.as_ref().and_then(Mlp::output_width).unwrap_or(0);
        let fusion = Mlp::new(&[LayerSpec::Linear { input: fused, output: 2 }], &mut rng)?;
        Ok(Self { fd, nd, fusion, config, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn forward(&mut self, x: &PairBatch, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Matrix> {
        let mut h = self.fd.forward(&x.fd, mode, rng)?;
        if let (Some(nd), Some(xs)) = (self.nd.as_mut(), x.nd.as_ref()) {
            h = h.hstack(&nd.forward(xs, mode, rng)?);
        }
        self.fusion.forward(&h, mode, rng)
    }

    fn backward(&mut self, dlogits: &Matrix) -> Result<()> {
        let dh = self.fusion.backward(dlogits)?;
        let fd_w = self.fd.output_width().unwrap_or(dh.cols());
        let (dfd, dnd) = dh.split_cols(fd_w);
        self.fd.backward(&dfd)?;
        if let Some(nd) = self.nd.as_mut() {
            nd.backward(&dnd)?;
        }
        Ok(())
    }

    fn step(&mut self, opt: &mut Sgd) -> Result<()> {
        let mut params = self.fd.params_mut();
        if let Some(nd) = self.nd.as_mut() {
            params.extend(nd.params_mut());
        }
        params.extend(self.fusion.params_mut());
        opt.step(&mut params)
    }

    /// Config scalars and every branch as named tensors.
    pub fn named_tensors(&self) -> Vec<(String, Matrix)> {
        let c = &self.config;
        let sort = if c.sort == SortOrder::Ascending { 0.0 } else { 1.0 };
        let scalars = vec![
            self.dim as f64,
            c.t1,
            c.t2,
            c.k as f64,
            c.k1 as f64,
            c.k2 as f64,
            c.dist_max,
            sort,
            f64::from(c.variant.code()),
        ];
        let mut out = vec![(String::from("linker.config"), Matrix::new(1, scalars.len(), scalars).expect("shape"))];
        out.extend(self.fd.named_tensors("linker.fd"));
        if let Some(nd) = &self.nd {
            out.extend(nd.named_tensors("linker.nd"));
        }
        out.extend(self.fusion.named_tensors("linker.fusion"));
        out
    }

    /// Inverse of [`NasaModel::named_tensors`]. Training hyperparameters are
    /// taken from `base`; feature settings come from the tensors.
    pub fn from_named_tensors(tensors: &[(String, Matrix)], base: &NasaConfig) -> Result<Self> {
        let cfg = tensors
            .iter()
            .find(|(n, _)| n == "linker.config")
            .map(|(_, m)| m.as_slice())
            .filter(|s| s.len() == 9)
            .ok_or_else(|| Error::ConfigMismatch(String::from("missing linker.config")))?;
        let variant = LinkerVariant::from_code(cfg[8] as u8)?;
        let mut config = base.clone();
        config.t1 = cfg[1];
        config.t2 = cfg[2];
        config.k = cfg[3] as usize;
        config.k1 = cfg[4] as usize;
        config.k2 = cfg[5] as usize;
        config.dist_max = cfg[6];
        config.sort = if cfg[7] == 0.0 { SortOrder::Ascending } else { SortOrder::Descending };
        config.variant = variant;
        let fd = Mlp::from_named_tensors("linker.fd", tensors)?;
        let nd = if variant.uses_structure() { Some(Mlp::from_named_tensors("linker.nd", tensors)?) } else { None };
        let fusion = Mlp::from_named_tensors("linker.fusion", tensors)?;
        Ok(Self { fd, nd, fusion, config, dim: cfg[0] as usize })
    }
}

/// Everything the predictor reads for a set of nodes: embeddings, their
/// enhanced counterparts, the kNN lists and a similarity index over them.
pub struct LinkerInputs<'a> {
    pub embeddings: &'a EmbeddingSet,
    pub enhanced: EmbeddingSet,
    pub knn: &'a KnnGraph,
    pub index: SimilarityIndex,
    params: SubgraphParams,
    variant: LinkerVariant,
}

impl<'a> LinkerInputs<'a> {
    pub fn new(model: &NasaModel, e: &'a EmbeddingSet, knn: &'a KnnGraph) -> Result<Self> {
        if e.dim() != model.dim {
            return Err(Error::ConfigMismatch(format!(
                "model expects dimension {}, embeddings have {}",
                model.dim,
                e.dim()
            )));
        }
        Ok(Self {
            embeddings: e,
            enhanced: enhance_embeddings(e, knn, model.config.t1)?,
            knn,
            index: SimilarityIndex::new(knn),
            params: model.config.subgraph_params(),
            variant: model.config.variant,
        })
    }

    fn batch(&self, pairs: &[PairSample]) -> Result<PairBatch> {
        let d = self.embeddings.dim();
        let fd_w = if self.variant == LinkerVariant::PairOnly { 2 * d } else { 4 * d };
        let mut fd = Matrix::zeros(pairs.len(), fd_w);
        let mut nd = self.variant.uses_structure().then(|| Matrix::zeros(pairs.len(), self.params.width()));
        for (r, p) in pairs.iter().enumerate() {
            if self.variant == LinkerVariant::PairOnly {
                write_original_pair(self.embeddings, p.i, p.j, fd.row_mut(r));
            } else {
                write_enhanced_pair(self.embeddings, &self.enhanced, p.i, p.j, fd.row_mut(r));
            }
            if let Some(nd) = nd.as_mut() {
                let sub = enclosed_subgraph(p.i, p.j, self.knn, &self.params)?;
                write_structural_feature(&sub, &self.index, &self.params, nd.row_mut(r));
            }
        }
        Ok(PairBatch { fd, nd })
    }
}

struct PairBatch {
    fd: Matrix,
    nd: Option<Matrix>,
}

fn dummy_rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0)
}

/// Linkage probabilities for `pairs` in eval mode. Rows are independent, so
/// the result does not depend on batching.
pub fn predict_pairs(model: &NasaModel, inputs: &LinkerInputs<'_>, pairs: &[PairSample]) -> Result<Vec<f64>> {
    let n = inputs.embeddings.len();
    if inputs.variant != model.config.variant || inputs.params != model.config.subgraph_params() {
        return Err(Error::ConfigMismatch(String::from("inputs were prepared for another model")));
    }
    for p in pairs {
        for index in [p.i, p.j] {
            if index >= n {
                return Err(Error::IndexOutOfRange { index, len: n });
            }
        }
        if p.i == p.j {
            return Err(Error::param("pair", "i and j must differ"));
        }
    }
    let mut out = vec![0.0; pairs.len()];
    par::for_each_chunk(&mut out, INFERENCE_BATCH, |chunk_idx, chunk| {
        let start = chunk_idx * INFERENCE_BATCH;
        let mut m = model.clone();
        let batch = inputs.batch(&pairs[start..start + chunk.len()]).expect("pairs validated above");
        let logits =
            m.forward(&batch, Mode::Eval, &mut dummy_rng()).expect("widths validated when the inputs were built");
        for (r, o) in chunk.iter_mut().enumerate() {
            *o = softmax(logits.row(r))[1];
        }
    });
    Ok(out)
}

/// Probability that `i` and `j` share an identity.
pub fn predict_linkage(model: &NasaModel, inputs: &LinkerInputs<'_>, i: usize, j: usize) -> Result<f64> {
    let n = inputs.embeddings.len();
    for index in [i, j] {
        if index >= n {
            return Err(Error::IndexOutOfRange { index, len: n });
        }
    }
    Ok(predict_pairs(model, inputs, &[PairSample { i, j, label: None }])?[0])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    /// Training-mode accuracy over the epoch's batches.
    pub accuracy: f64,
    /// Eval-mode `Σ P(same) − Σ P(different)` after the epoch.
    pub margin: f64,
}

fn class_weights(labels: &[usize]) -> [f64; 2] {
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    let n = labels.len() as f64;
    [if neg > 0.0 { n / (2.0 * neg) } else { 0.0 }, if pos > 0.0 { n / (2.0 * pos) } else { 0.0 }]
}

/// Trains a fresh model on every non-self kNN pair, reshuffled each epoch.
pub fn train_nasa(
    e: &EmbeddingSet,
    knn: &KnnGraph,
    gt: &LabelVector,
    cfg: &NasaConfig,
) -> Result<(NasaModel, Vec<EpochLog>)> {
    check_labels(e.len(), gt)?;
    let mut model = NasaModel::new(e.dim(), cfg.clone())?;
    let log = fit(&mut model, e, knn, gt)?;
    Ok((model, log))
}

/// Continues training `model` for `model.config.epochs` epochs.
pub fn fit(model: &mut NasaModel, e: &EmbeddingSet, knn: &KnnGraph, gt: &LabelVector) -> Result<Vec<EpochLog>> {
    let cfg = model.config.clone();
    let pairs: Vec<PairSample> = generate_pairs(knn, Some(gt))?.collect();
    let labels: Vec<usize> = pairs.iter().map(|p| usize::from(p.label == Some(true))).collect();
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == labels.len() {
        log::warn!("linker training pairs contain a single class ({positives} of {} positive)", labels.len());
    }
    let weights = class_weights(&labels);
    let inputs = LinkerInputs::new(model, e, knn)?;
    let schedule = LrSchedule::linker(cfg.lr);
    let mut opt = Sgd::new(cfg.lr, cfg.momentum, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6c69_6e6b);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        opt.lr = schedule.lr_at(epoch);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for batch_idx in order.chunks(cfg.batch_size) {
            // batch norm needs at least two rows
            if batch_idx.len() < 2 {
                continue;
            }
            let batch_pairs: Vec<PairSample> = batch_idx.iter().map(|&p| pairs[p]).collect();
            let y: Vec<usize> = batch_idx.iter().map(|&p| labels[p]).collect();
            let w: Option<Vec<f64>> = cfg.balance_classes.then(|| y.iter().map(|&l| weights[l]).collect());
            let x = inputs.batch(&batch_pairs)?;
            let logits = model.forward(&x, Mode::Train, &mut rng)?;
            let (loss, dlogits) = softmax_cross_entropy(&logits, &y, w.as_deref())?;
            model.backward(&dlogits)?;
            model.step(&mut opt)?;
            loss_sum += loss * y.len() as f64;
            seen += y.len();
            correct += (0..y.len()).filter(|&r| usize::from(logits.get(r, 1) > logits.get(r, 0)) == y[r]).count();
        }
        let probs = predict_pairs(model, &inputs, &pairs)?;
        let entry = EpochLog {
            epoch,
            lr: opt.lr,
            loss: if seen > 0 { loss_sum / seen as f64 } else { 0.0 },
            accuracy: if seen > 0 { correct as f64 / seen as f64 } else { 0.0 },
            margin: margin_from(&probs, &labels),
        };
        log::info!(
            "linker epoch {} lr {} loss {:.6} acc {:.4} margin {:.3}",
            entry.epoch,
            entry.lr,
            entry.loss,
            entry.accuracy,
            entry.margin
        );
        log.push(entry);
    }
    Ok(log)
}

/// Replaces every non-self kNN weight with its predicted linkage
/// probability. Self edges keep weight 1 and topology is unchanged.
pub fn adjust_graph(model: &NasaModel, e: &EmbeddingSet, knn: &KnnGraph) -> Result<WeightedGraph> {
    let inputs = LinkerInputs::new(model, e, knn)?;
    let pairs: Vec<PairSample> = generate_pairs(knn, None)?.collect();
    let probs = predict_pairs(model, &inputs, &pairs)?;
    let mut it = probs.into_iter();
    let mut weights = Vec::with_capacity(knn.len() * knn.k());
    for i in 0..knn.len() {
        for nb in knn.neighbors(i) {
            weights.push(if nb.id == i { 1.0 } else { it.next().expect("one probability per pair") });
        }
    }
    WeightedGraph::from_knn_weights(knn, weights)
}

/// Binary classification counts at a probability cutoff; ties count as
/// positive predictions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

impl PairReport {
    pub fn from_scores(scores: &[f64], labels: &[bool], cutoff: f64) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::LengthMismatch { left: scores.len(), right: labels.len() });
        }
        let (mut tp, mut fp, mut tn, mut fneg) = (0, 0, 0, 0);
        for (&s, &l) in scores.iter().zip(labels) {
            match (s >= cutoff, l) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fneg += 1,
            }
        }
        let ratio = |a: usize, b: usize| if b > 0 { a as f64 / b as f64 } else { 0.0 };
        Ok(Self {
            accuracy: ratio(tp + tn, scores.len()),
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fneg),
            true_pos: tp,
            false_pos: fp,
            true_neg: tn,
            false_neg: fneg,
        })
    }
}

fn labeled_pairs(knn: &KnnGraph, gt: &LabelVector) -> Result<(Vec<PairSample>, Vec<bool>)> {
    let pairs: Vec<PairSample> = generate_pairs(knn, Some(gt))?.collect();
    let labels = pairs.iter().map(|p| p.label == Some(true)).collect();
    Ok((pairs, labels))
}

/// Accuracy, precision and recall of the predictor over all kNN pairs.
pub fn pair_report(
    model: &NasaModel,
    e: &EmbeddingSet,
    knn: &KnnGraph,
    gt: &LabelVector,
    cutoff: f64,
) -> Result<PairReport> {
    if !(cutoff > 0.0 && cutoff < 1.0) {
        return Err(Error::param("cutoff", "must lie in (0, 1)"));
    }
    let (pairs, labels) = labeled_pairs(knn, gt)?;
    let inputs = LinkerInputs::new(model, e, knn)?;
    PairReport::from_scores(&predict_pairs(model, &inputs, &pairs)?, &labels, cutoff)
}

/// The same report with raw cosine similarity as the score.
pub fn similarity_report(knn: &KnnGraph, gt: &LabelVector, cutoff: f64) -> Result<PairReport> {
    let (pairs, labels) = labeled_pairs(knn, gt)?;
    let index = SimilarityIndex::new(knn);
    let scores: Vec<f64> =
        pairs.iter().map(|p| index.lookup(p.i, p.j).expect("pair comes from the kNN lists")).collect();
    PairReport::from_scores(&scores, &labels, cutoff)
}

/// Raw-similarity cutoff with the highest pair accuracy over the labeled
/// kNN pairs, with its report. Ties in accuracy keep the higher cutoff.
pub fn best_similarity_cutoff(knn: &KnnGraph, gt: &LabelVector) -> Result<(f64, PairReport)> {
    let (pairs, labels) = labeled_pairs(knn, gt)?;
    if pairs.is_empty() {
        return Err(Error::Undefined("no kNN pairs"));
    }
    let index = SimilarityIndex::new(knn);
    let mut scored: Vec<(f64, bool)> = pairs
        .iter()
        .zip(&labels)
        .map(|(p, &l)| (index.lookup(p.i, p.j).expect("pair comes from the kNN lists"), l))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let negatives = labels.iter().filter(|&&l| !l).count();
    // cutting just above the highest score predicts everything negative
    let mut best = (negatives, libm::nextafter(scored[0].0, f64::INFINITY));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut at = 0;
    while at < scored.len() {
        let cut = scored[at].0;
        while at < scored.len() && scored[at].0 == cut {
            if scored[at].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            at += 1;
        }
        let correct = tp + negatives - fp;
        if correct > best.0 {
            best = (correct, cut);
        }
    }
    let cutoff = best.1;
    Ok((cutoff, similarity_report(knn, gt, cutoff)?))
}

fn margin_from(probs: &[f64], labels: &[usize]) -> f64 {
    probs.iter().zip(labels).map(|(&p, &l)| if l == 1 { p } else { -p }).sum()
}

/// `Σ P(same) − Σ P(different)` over all labeled kNN pairs.
pub fn margin_objective(model: &NasaModel, e: &EmbeddingSet, knn: &KnnGraph, gt: &LabelVector) -> Result<f64> {
    let (pairs, labels) = labeled_pairs(knn, gt)?;
    let inputs = LinkerInputs::new(model, e, knn)?;
    let probs = predict_pairs(model, &inputs, &pairs)?;
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    Ok(margin_from(&probs, &labels))
}
