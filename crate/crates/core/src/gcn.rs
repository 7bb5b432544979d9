//! Binary subgraphs rebuilt from linkage probabilities and the two-layer GCN
//! that aggregates features over them.
//!
//! Each layer computes `SELU(mean_agg(F)·W + F·W_skip)`, where `mean_agg`
//! averages a node's own row with its neighbors' rows. An ArcFace head on top
//! of the second layer supplies the training signal.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{check_labels, normalize_rows, EmbeddingSet, LabelVector, WeightedGraph};
use crate::linalg::{axpy, Matrix};
use crate::nn::{ArcFaceHead, LrSchedule, Param, Selu, Sgd};
use crate::{math, par, Error, Result};

const AGG_CHUNK: usize = 256;

/// Undirected neighbor lists without self loops. Propagation adds the self
/// loop, so every node has degree at least one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseAdjacency {
    neighbors: Vec<Vec<usize>>,
}

impl SparseAdjacency {
    /// Symmetrizes the given lists by union and drops self loops.
    pub fn from_lists(lists: Vec<Vec<usize>>) -> Result<Self> {
        let n = lists.len();
        let mut neighbors = vec![Vec::new(); n];
        for (i, list) in lists.into_iter().enumerate() {
            for j in list {
                if j >= n {
                    return Err(Error::IndexOutOfRange { index: j, len: n });
                }
                if j != i {
                    neighbors[i].push(j);
                    neighbors[j].push(i);
                }
            }
        }
        for l in &mut neighbors {
            l.sort_unstable();
            l.dedup();
        }
        Ok(Self { neighbors })
    }

    /// Graph without edges.
    pub fn empty(n: usize) -> Self {
        Self { neighbors: vec![Vec::new(); n] }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Row sum of `A + I`.
    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len() + 1
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Same graph under the relabeling `new id = position of old id in order`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut inverse = vec![0; order.len()];
        for (new, &old) in order.iter().enumerate() {
            inverse[old] = new;
        }
        let lists = order.iter().map(|&old| self.neighbors[old].iter().map(|&j| inverse[j]).collect()).collect();
        Self::from_lists(lists).expect("permutation keeps ids in range")
    }
}

/// Keeps each non-self edge whose weight is at least `t3`, then symmetrizes.
pub fn build_adjacency(g: &WeightedGraph, t3: f64) -> SparseAdjacency {
    let lists = (0..g.len())
        .map(|i| g.edges(i).iter().filter(|e| e.to != i && e.weight >= t3).map(|e| e.to).collect())
        .collect();
    SparseAdjacency::from_lists(lists).expect("graph ids are in range")
}

/// `D̃⁻¹ÃF`: each row becomes the mean of itself and its neighbors.
pub fn mean_aggregate(f: &Matrix, adj: &SparseAdjacency) -> Result<Matrix> {
    if f.rows() != adj.len() {
        return Err(Error::LengthMismatch { left: f.rows(), right: adj.len() });
    }
    let d = f.cols();
    let mut out = f.clone();
    if d == 0 {
        return Ok(out);
    }
    par::for_each_chunk(out.as_mut_slice(), AGG_CHUNK * d, |chunk_idx, chunk| {
        for (r, row) in chunk.chunks_mut(d).enumerate() {
            let i = chunk_idx * AGG_CHUNK + r;
            for &j in adj.neighbors(i) {
                axpy(1.0, f.row(j), row);
            }
            let inv = 1.0 / adj.degree(i) as f64;
            row.iter_mut().for_each(|v| *v *= inv);
        }
    });
    Ok(out)
}

fn check_shapes(f: &Matrix, w: &Matrix, w_skip: &Matrix) -> Result<()> {
    for m in [w, w_skip] {
        if m.rows() != f.cols() {
            return Err(Error::DimMismatch { expected: f.cols(), actual: m.rows() });
        }
    }
    if w.cols() != w_skip.cols() {
        return Err(Error::DimMismatch { expected: w.cols(), actual: w_skip.cols() });
    }
    Ok(())
}

fn selu_in_place(m: &mut Matrix) {
    m.as_mut_slice().iter_mut().for_each(|v| *v = Selu::value(*v));
}

/// `SELU(D̃⁻¹ÃFW + FW_skip)`.
pub fn gcn_layer(f: &Matrix, adj: &SparseAdjacency, w: &Matrix, w_skip: &Matrix) -> Result<Matrix> {
    check_shapes(f, w, w_skip)?;
    let mut z = mean_aggregate(f, adj)?.matmul(w);
    z.add_assign(&f.matmul(w_skip));
    selu_in_place(&mut z);
    Ok(z)
}

#[derive(Clone, Debug)]
pub struct GcnLayer {
    pub weight: Param,
    pub skip: Param,
}

impl GcnLayer {
    /// Uniform init with variance `1 / (2·fan_in)` per path, so the summed
    /// pre-activation has unit variance for unit-variance inputs.
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = math::sqrt(1.5 / input.max(1) as f64);
        let mut draw = || Matrix::from_fn(input, output, |_, _| rng.random_range(-bound..bound));
        let weight = Param::new(draw());
        let skip = Param::new(draw());
        Self { weight, skip }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcnConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Applied to the first layer's output during training.
    pub dropout: f64,
    pub scale: f64,
    pub margin: f64,
    pub seed: u64,
}

impl GcnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::param("dropout", "must lie in [0, 1)"));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::param("scale", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GcnModel {
    pub layers: [GcnLayer; 2],
    pub head: ArcFaceHead,
}

impl GcnModel {
    pub fn new(dim: usize, classes: usize, cfg: &GcnConfig) -> Result<Self> {
        cfg.validate()?;
        if classes == 0 {
            return Err(Error::param("classes", "must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let layers = [GcnLayer::new(dim, dim, &mut rng), GcnLayer::new(dim, dim, &mut rng)];
        let head = ArcFaceHead::new(classes, dim, cfg.scale, cfg.margin, &mut rng);
        Ok(Self { layers, head })
    }

    pub fn dim(&self) -> usize {
        self.layers[0].weight.value.rows()
    }

    /// Both layers in eval mode, without the final normalization.
    pub fn forward(&self, f: &Matrix, adj: &SparseAdjacency) -> Result<Matrix> {
        let h1 = gcn_layer(f, adj, &self.layers[0].weight.value, &self.layers[0].skip.value)?;
        gcn_layer(&h1, adj, &self.layers[1].weight.value, &self.layers[1].skip.value)
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let [l0, l1] = &mut self.layers;
        vec![&mut l0.weight, &mut l0.skip, &mut l1.weight, &mut l1.skip, &mut self.head.weight]
    }

    pub fn named_tensors(&self) -> Vec<(String, Matrix)> {
        let mut out = vec![(
            String::from("gcn.config"),
            Matrix::new(1, 2, vec![self.head.scale, self.head.margin]).expect("shape"),
        )];
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("gcn.{i}.weight"), l.weight.value.clone()));
            out.push((format!("gcn.{i}.skip"), l.skip.value.clone()));
        }
        out.push((String::from("gcn.head.weight"), self.head.weight.value.clone()));
        out
    }

    pub fn from_named_tensors(tensors: &[(String, Matrix)]) -> Result<Self> {
        let find = |name: &str| -> Result<Matrix> {
            tensors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, m)| m.clone())
                .ok_or_else(|| Error::ConfigMismatch(format!("missing tensor {name}")))
        };
        let cfg = find("gcn.config")?;
        if cfg.as_slice().len() != 2 {
            return Err(Error::ConfigMismatch(String::from("gcn.config must hold 2 values")));
        }
        let layer = |i: usize| -> Result<GcnLayer> {
            Ok(GcnLayer {
                weight: Param::new(find(&format!("gcn.{i}.weight"))?),
                skip: Param::new(find(&format!("gcn.{i}.skip"))?),
            })
        };
        let layers = [layer(0)?, layer(1)?];
        let head_w = find("gcn.head.weight")?;
        let d = layers[0].weight.value.rows();
        for l in &layers {
            for m in [&l.weight.value, &l.skip.value] {
                if (m.rows(), m.cols()) != (d, d) {
                    return Err(Error::ConfigMismatch(String::from("gcn layer weights must be square")));
                }
            }
        }
        if head_w.cols() != d {
            return Err(Error::ConfigMismatch(String::from("gcn head width mismatch")));
        }
        let c = cfg.as_slice();
        Ok(Self { layers, head: ArcFaceHead { weight: Param::new(head_w), scale: c[0], margin: c[1] } })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GcnEpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub accuracy: f64,
}

fn elementwise_selu_grad(z: &Matrix, upstream: &Matrix) -> Matrix {
    let mut out = upstream.clone();
    for (o, &zv) in out.as_mut_slice().iter_mut().zip(z.as_slice()) {
        *o *= Selu::derivative(zv);
    }
    out
}

/// One mini-batch forward/backward pass. Returns loss, per-row predictions
/// and leaves parameter gradients in `model`.
#[allow(clippy::too_many_arguments)]
fn batch_step<R: Rng + ?Sized>(
    model: &mut GcnModel,
    x: &Matrix,
    agg0: &Matrix,
    adj: &SparseAdjacency,
    batch: &[usize],
    labels: &[usize],
    dropout: f64,
    rng: &mut R,
) -> Result<(f64, Vec<usize>)> {
    // layer 1 runs on the batch and every neighbor of it
    let mut support: Vec<usize> =
        batch.iter().flat_map(|&b| core::iter::once(b).chain(adj.neighbors(b).iter().copied())).collect();
    support.sort_unstable();
    support.dedup();
    let pos = |id: usize| support.binary_search(&id).expect("id is in the support set");

    let a0 = agg0.select_rows(&support);
    let x0 = x.select_rows(&support);
    let [l0, l1] = &model.layers;
    let mut z1 = a0.matmul(&l0.weight.value);
    z1.add_assign(&x0.matmul(&l0.skip.value));
    let mut h1 = z1.clone();
    selu_in_place(&mut h1);
    let keep = 1.0 - dropout;
    let mask: Option<Vec<f64>> = (dropout > 0.0)
        .then(|| (0..h1.as_slice().len()).map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect());
    if let Some(mask) = &mask {
        h1.as_mut_slice().iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
    }

    let d1 = h1.cols();
    let mut agg1 = Matrix::zeros(batch.len(), d1);
    let mut h1_batch = Matrix::zeros(batch.len(), d1);
    for (r, &b) in batch.iter().enumerate() {
        let row = agg1.row_mut(r);
        row.copy_from_slice(h1.row(pos(b)));
        for &j in adj.neighbors(b) {
            axpy(1.0, h1.row(pos(j)), row);
        }
        let inv = 1.0 / adj.degree(b) as f64;
        row.iter_mut().for_each(|v| *v *= inv);
        h1_batch.row_mut(r).copy_from_slice(h1.row(pos(b)));
    }
    let mut z2 = agg1.matmul(&l1.weight.value);
    z2.add_assign(&h1_batch.matmul(&l1.skip.value));
    let mut h2 = z2.clone();
    selu_in_place(&mut h2);

    let (loss, dh2) = model.head.loss(&h2, labels)?;
    let cos = model.head.cosines(&h2)?;
    let preds = (0..cos.rows())
        .map(|r| {
            let row = cos.row(r);
            (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a))).unwrap_or(0)
        })
        .collect();

    let [l0, l1] = &mut model.layers;
    let dz2 = elementwise_selu_grad(&z2, &dh2);
    l1.weight.grad = agg1.t_matmul(&dz2);
    l1.skip.grad = h1_batch.t_matmul(&dz2);
    let dagg1 = dz2.matmul_t(&l1.weight.value);
    let dskip1 = dz2.matmul_t(&l1.skip.value);
    let mut dh1 = Matrix::zeros(h1.rows(), d1);
    for (r, &b) in batch.iter().enumerate() {
        axpy(1.0, dskip1.row(r), dh1.row_mut(pos(b)));
        let inv = 1.0 / adj.degree(b) as f64;
        axpy(inv, dagg1.row(r), dh1.row_mut(pos(b)));
        for &j in adj.neighbors(b) {
            axpy(inv, dagg1.row(r), dh1.row_mut(pos(j)));
        }
    }
    if let Some(mask) = &mask {
        dh1.as_mut_slice().iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
    }
    let dz1 = elementwise_selu_grad(&z1, &dh1);
    l0.weight.grad = a0.t_matmul(&dz1);
    l0.skip.grad = x0.t_matmul(&dz1);
    Ok((loss, preds))
}

/// Trains a fresh GCN with an ArcFace head on the labeled nodes of `e`.
pub fn train_gcn(
    e: &EmbeddingSet,
    adj: &SparseAdjacency,
    gt: &LabelVector,
    cfg: &GcnConfig,
) -> Result<(GcnModel, Vec<GcnEpochLog>)> {
    check_labels(e.len(), gt)?;
    if adj.len() != e.len() {
        return Err(Error::LengthMismatch { left: adj.len(), right: e.len() });
    }
    let (labels, classes) = gt.to_contiguous();
    let mut model = GcnModel::new(e.dim(), classes, cfg)?;
    let x = e.matrix();
    let agg0 = mean_aggregate(x, adj)?;
    let schedule = LrSchedule::gcn(cfg.lr);
    let mut opt = Sgd::new(cfg.lr, cfg.momentum, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0067_636e);
    let mut order: Vec<usize> = (0..e.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        opt.lr = schedule.lr_at(epoch);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let y: Vec<usize> = batch.iter().map(|&b| labels[b]).collect();
            let (loss, preds) = batch_step(&mut model, x, &agg0, adj, batch, &y, cfg.dropout, &mut rng)?;
            opt.step(&mut model.params_mut())?;
            loss_sum += loss * batch.len() as f64;
            correct += preds.iter().zip(&y).filter(|(p, y)| p == y).count();
        }
        let n = e.len().max(1) as f64;
        let entry = GcnEpochLog { epoch, lr: opt.lr, loss: loss_sum / n, accuracy: correct as f64 / n };
        log::info!("gcn epoch {} lr {} loss {:.6} acc {:.4}", epoch, entry.lr, entry.loss, entry.accuracy);
        log.push(entry);
    }
    Ok((model, log))
}

/// Full forward pass followed by row L2 normalization.
pub fn aggregate(model: &GcnModel, e: &EmbeddingSet, adj: &SparseAdjacency) -> Result<EmbeddingSet> {
    if e.dim() != model.dim() {
        return Err(Error::ConfigMismatch(format!(
            "model expects dimension {}, embeddings have {}",
            model.dim(),
            e.dim()
        )));
    }
    normalize_rows(model.forward(e.matrix(), adj)?)
}

/// Gradients of the mean ArcFace loss over `batch` with respect to every
/// model parameter, computed by the training step without dropout.
pub fn batch_gradients(
    model: &mut GcnModel,
    e: &EmbeddingSet,
    adj: &SparseAdjacency,
    batch: &[usize],
    labels: &[usize],
) -> Result<(f64, Vec<f64>)> {
    let agg0 = mean_aggregate(e.matrix(), adj)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (loss, _) = batch_step(model, e.matrix(), &agg0, adj, batch, labels, 0.0, &mut rng)?;
    let grads = model.params_mut().iter().flat_map(|p| p.grad.as_slice().to_vec()).collect();
    Ok((loss, grads))
}

/// Mean ArcFace loss over `batch` from the eval-mode forward pass.
pub fn batch_loss(
    model: &GcnModel,
    e: &EmbeddingSet,
    adj: &SparseAdjacency,
    batch: &[usize],
    labels: &[usize],
) -> Result<f64> {
    let h = model.forward(e.matrix(), adj)?.select_rows(batch);
    let mut head = model.head.clone();
    Ok(head.loss(&h, labels)?.0)
}

/// Flattened parameters in the order used by [`batch_gradients`].
pub fn flat_params(model: &mut GcnModel) -> Vec<f64> {
    model.params_mut().iter().flat_map(|p| p.value.as_slice().to_vec()).collect()
}

pub fn set_flat_params(model: &mut GcnModel, flat: &[f64]) {
    let mut at = 0;
    for p in model.params_mut() {
        let n = p.value.as_slice().len();
        p.value.as_mut_slice().copy_from_slice(&flat[at..at + n]);
        at += n;
    }
}
