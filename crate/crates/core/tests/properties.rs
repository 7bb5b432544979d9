//! Structural properties of the pair features, linker and GCN.

use nasa_core::config::{PipelineConfig, Preset};
use nasa_core::features::{
    enclosed_subgraph, generate_pairs, structural_feature, NodeLabeling, SortOrder, SubgraphParams,
};
use nasa_core::gcn::{aggregate, build_adjacency, train_gcn, GcnConfig};
use nasa_core::graph::{build_knn, LabelVector, SimilarityIndex, WeightedGraph};
use nasa_core::linalg::Matrix;
use nasa_core::linker::{
    adjust_graph, margin_objective, pair_report, predict_linkage, predict_pairs, train_nasa, LinkerInputs,
    LinkerVariant, NasaConfig, NasaModel, PairReport,
};
use nasa_core::synth::{synth_generate, ClassSizes, SynthSpec};

fn blobs(classes: usize, size: usize, noise: f64, seed: u64) -> (nasa_core::graph::EmbeddingSet, LabelVector) {
    synth_generate(&SynthSpec { classes, sizes: ClassSizes::Fixed(size), dim: 16, noise, seed }).unwrap()
}

fn small_nasa(k: usize, variant: LinkerVariant) -> NasaConfig {
    let mut c = PipelineConfig::preset(Preset::Synth).nasa;
    c.k = k;
    c.k1 = 4;
    c.k2 = 2;
    c.fd_hidden = vec![16, 8];
    c.nd_hidden = vec![8, 4];
    c.epochs = 3;
    c.batch_size = 32;
    c.variant = variant;
    c
}

fn params(t2: f64, k1: usize, k2: usize) -> SubgraphParams {
    SubgraphParams { t2, k1, k2, dist_max: 4.0, labeling: NodeLabeling::Distance, sort: SortOrder::Ascending }
}

#[test]
fn structural_feature_is_symmetric_in_the_pair() {
    let (e, _) = blobs(6, 8, 0.3, 1);
    let knn = build_knn(&e, 10).unwrap();
    let index = SimilarityIndex::new(&knn);
    let p = params(0.1, 5, 3);
    for i in 0..e.len() {
        for nb in knn.neighbors(i).iter().skip(1) {
            let a = structural_feature(&enclosed_subgraph(i, nb.id, &knn, &p).unwrap(), &index, &p);
            let b = structural_feature(&enclosed_subgraph(nb.id, i, &knn, &p).unwrap(), &index, &p);
            assert_eq!(a, b);
        }
    }
}

#[test]
fn labels_stay_in_range_with_full_neighborhoods() {
    let (e, _) = blobs(3, 6, 0.5, 2);
    let n = e.len();
    let knn = build_knn(&e, n).unwrap();
    let index = SimilarityIndex::new(&knn);
    let p = params(-1.0, 5, 3);
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let v = structural_feature(&enclosed_subgraph(i, j, &knn, &p).unwrap(), &index, &p);
            assert_eq!(v.len(), p.width());
            // every similarity is known and at least t2, so labels lie in [order - 1, order + 1]
            assert!(v.iter().all(|&x| (-1.0..=3.0).contains(&x)), "{v:?}");
        }
    }
}

#[test]
fn zero_fusion_weights_give_one_half() {
    let (e, _) = blobs(4, 6, 0.2, 3);
    let knn = build_knn(&e, 6).unwrap();
    let mut model = NasaModel::new(e.dim(), small_nasa(6, LinkerVariant::Full)).unwrap();
    for p in model.fusion.params_mut() {
        p.value = Matrix::zeros(p.value.rows(), p.value.cols());
    }
    let inputs = LinkerInputs::new(&model, &e, &knn).unwrap();
    for j in 1..5 {
        assert_eq!(predict_linkage(&model, &inputs, 0, j).unwrap(), 0.5);
    }
    let gt = LabelVector::new((0..e.len()).map(|i| i % 4).collect());
    let report = pair_report(&model, &e, &knn, &gt, 0.5).unwrap();
    assert_eq!(report.recall, 1.0);
    let base_rate = report.true_pos as f64 / (report.true_pos + report.false_pos) as f64;
    assert_eq!(report.precision, base_rate);
    let pos = report.true_pos as f64;
    let neg = report.false_pos as f64;
    assert!((margin_objective(&model, &e, &knn, &gt).unwrap() - 0.5 * (pos - neg)).abs() < 1e-9);
}

#[test]
fn adjust_preserves_topology() {
    let (e, gt) = blobs(5, 8, 0.3, 4);
    let knn = build_knn(&e, 8).unwrap();
    let (model, _) = train_nasa(&e, &knn, &gt, &small_nasa(8, LinkerVariant::Full)).unwrap();
    let g = adjust_graph(&model, &e, &knn).unwrap();
    for i in 0..knn.len() {
        let edges = g.edges(i);
        assert_eq!(edges.len(), knn.neighbors(i).len());
        for (edge, nb) in edges.iter().zip(knn.neighbors(i)) {
            assert_eq!(edge.to, nb.id);
            if nb.id == i {
                assert_eq!(edge.weight, 1.0);
            } else {
                assert!((0.0..=1.0).contains(&edge.weight));
            }
        }
    }
}

#[test]
fn pair_report_matches_confusion_oracle() {
    let (e, gt) = blobs(8, 10, 0.35, 5);
    let knn = build_knn(&e, 10).unwrap();
    let (model, _) = train_nasa(&e, &knn, &gt, &small_nasa(10, LinkerVariant::Enhanced)).unwrap();
    let g = adjust_graph(&model, &e, &knn).unwrap();
    let (mut scores, mut labels) = (Vec::new(), Vec::new());
    for i in 0..g.len() {
        for edge in g.edges(i).iter().filter(|x| x.to != i) {
            scores.push(edge.weight);
            labels.push(gt.get(i) == gt.get(edge.to));
        }
    }
    let mut c = [0usize; 4];
    for (&s, &l) in scores.iter().zip(&labels) {
        c[usize::from(s >= 0.5) * 2 + usize::from(l)] += 1;
    }
    let (tn, fneg, fp, tp) = (c[0], c[1], c[2], c[3]);
    let r = pair_report(&model, &e, &knn, &gt, 0.5).unwrap();
    assert_eq!((r.true_pos, r.false_pos, r.true_neg, r.false_neg), (tp, fp, tn, fneg));
    assert_eq!(r, PairReport::from_scores(&scores, &labels, 0.5).unwrap());
}

#[test]
fn zero_epochs_leaves_model_unchanged() {
    let (e, gt) = blobs(4, 6, 0.2, 6);
    let knn = build_knn(&e, 6).unwrap();
    let mut cfg = small_nasa(6, LinkerVariant::Full);
    cfg.epochs = 0;
    let (trained, log) = train_nasa(&e, &knn, &gt, &cfg).unwrap();
    let fresh = NasaModel::new(e.dim(), cfg).unwrap();
    assert!(log.is_empty());
    assert_eq!(trained.named_tensors(), fresh.named_tensors());
}

#[test]
fn training_is_reproducible() {
    let (e, gt) = blobs(5, 8, 0.3, 7);
    let knn = build_knn(&e, 8).unwrap();
    let cfg = small_nasa(8, LinkerVariant::Full);
    let (a, la) = train_nasa(&e, &knn, &gt, &cfg).unwrap();
    let (b, lb) = train_nasa(&e, &knn, &gt, &cfg).unwrap();
    assert_eq!(la, lb);
    assert_eq!(a.named_tensors(), b.named_tensors());
}

#[test]
fn two_separated_classes_train_to_high_accuracy() {
    let (e, gt) = blobs(2, 40, 0.05, 8);
    let knn = build_knn(&e, 60).unwrap();
    let mut cfg = small_nasa(60, LinkerVariant::Full);
    cfg.epochs = 5;
    let (_, log) = train_nasa(&e, &knn, &gt, &cfg).unwrap();
    assert!(log.last().unwrap().accuracy >= 0.99, "{log:?}");
}

#[test]
fn separable_held_out_pairs_are_confident() {
    let (etr, ltr) = blobs(10, 20, 0.05, 21);
    let (ete, lte) = blobs(10, 20, 0.05, 22);
    let mut cfg = small_nasa(20, LinkerVariant::Full);
    cfg.epochs = 5;
    let (model, _) = train_nasa(&etr, &build_knn(&etr, 20).unwrap(), &ltr, &cfg).unwrap();
    let knn = build_knn(&ete, 20).unwrap();
    let g = adjust_graph(&model, &ete, &knn).unwrap();
    let (mut confident, mut total) = (0usize, 0usize);
    for i in 0..g.len() {
        for e in g.edges(i).iter().filter(|e| e.to != i) {
            let same = lte.get(i) == lte.get(e.to);
            total += 1;
            confident += usize::from(if same { e.weight > 0.9 } else { e.weight < 0.1 });
        }
    }
    assert!(confident as f64 >= 0.95 * total as f64, "{confident} of {total}");
}

#[test]
fn batched_and_single_predictions_agree_bitwise() {
    let (e, gt) = blobs(30, 20, 0.2, 31);
    let knn = build_knn(&e, 10).unwrap();
    let (model, _) = train_nasa(&e, &knn, &gt, &small_nasa(10, LinkerVariant::Full)).unwrap();
    let inputs = LinkerInputs::new(&model, &e, &knn).unwrap();
    let pairs: Vec<_> = generate_pairs(&knn, None).unwrap().collect();
    assert!(pairs.len() > 2 * nasa_core::linker::INFERENCE_BATCH);
    let batched = predict_pairs(&model, &inputs, &pairs).unwrap();
    for (p, &b) in pairs.iter().zip(&batched).step_by(37) {
        assert_eq!(predict_linkage(&model, &inputs, p.i, p.j).unwrap().to_bits(), b.to_bits());
    }
}

#[test]
fn checkpoint_tensors_round_trip() {
    let (e, gt) = blobs(4, 6, 0.2, 9);
    let knn = build_knn(&e, 6).unwrap();
    for variant in [LinkerVariant::PairOnly, LinkerVariant::Full] {
        let cfg = small_nasa(6, variant);
        let (m, _) = train_nasa(&e, &knn, &gt, &cfg).unwrap();
        let back = NasaModel::from_named_tensors(&m.named_tensors(), &cfg).unwrap();
        assert_eq!(back.named_tensors(), m.named_tensors());
        let a = adjust_graph(&m, &e, &knn).unwrap();
        let b = adjust_graph(&back, &e, &knn).unwrap();
        assert_eq!(a, b);
    }
}

fn gcn_cfg() -> GcnConfig {
    GcnConfig {
        lr: 0.01,
        momentum: 0.9,
        weight_decay: 1e-4,
        batch_size: 16,
        epochs: 3,
        dropout: 0.1,
        scale: 40.0,
        margin: 0.25,
        seed: 42,
    }
}

#[test]
fn aggregate_is_permutation_equivariant() {
    let (e, gt) = blobs(5, 8, 0.3, 10);
    let knn = build_knn(&e, 6).unwrap();
    let adj = build_adjacency(&WeightedGraph::from_knn(&knn), 0.3);
    let (model, _) = train_gcn(&e, &adj, &gt, &gcn_cfg()).unwrap();
    let out = aggregate(&model, &e, &adj).unwrap();
    let order: Vec<usize> = (0..e.len()).rev().collect();
    let permuted = aggregate(&model, &e.permuted(&order), &adj.permuted(&order)).unwrap();
    for (new, &old) in order.iter().enumerate() {
        for (a, b) in permuted.row(new).iter().zip(out.row(old)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    for i in 0..out.len() {
        let n: f64 = out.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-5);
    }
}

#[test]
fn empty_adjacency_uses_own_features_only() {
    let (e, gt) = blobs(3, 5, 0.2, 11);
    let adj = build_adjacency(&WeightedGraph::from_knn(&build_knn(&e, 4).unwrap()), 2.0);
    let (model, _) = train_gcn(&e, &adj, &gt, &gcn_cfg()).unwrap();
    let full = aggregate(&model, &e, &adj).unwrap();
    let single = nasa_core::graph::EmbeddingSet::from_matrix(e.matrix().select_rows(&[4])).unwrap();
    let alone = aggregate(&model, &single, &nasa_core::gcn::SparseAdjacency::empty(1)).unwrap();
    assert_eq!(alone.row(0), full.row(4));
}

#[test]
fn single_class_gcn_loss_is_zero() {
    let (e, _) = blobs(2, 6, 0.2, 12);
    let gt = LabelVector::new(vec![7; e.len()]);
    let adj = build_adjacency(&WeightedGraph::from_knn(&build_knn(&e, 4).unwrap()), 0.0);
    let (_, log) = train_gcn(&e, &adj, &gt, &gcn_cfg()).unwrap();
    assert!(log.iter().all(|l| l.loss.abs() < 1e-12));
}

#[test]
fn gcn_training_is_reproducible() {
    let (e, gt) = blobs(4, 8, 0.3, 13);
    let adj = build_adjacency(&WeightedGraph::from_knn(&build_knn(&e, 6).unwrap()), 0.3);
    let (a, la) = train_gcn(&e, &adj, &gt, &gcn_cfg()).unwrap();
    let (b, lb) = train_gcn(&e, &adj, &gt, &gcn_cfg()).unwrap();
    assert_eq!(la, lb);
    assert_eq!(a.named_tensors(), b.named_tensors());
}
