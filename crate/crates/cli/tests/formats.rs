//! File format round trips and corruption handling.

use std::fs;
use std::path::PathBuf;

use nasa_cli::checkpoint;
use nasa_cli::io::{
    load_clusters, load_features, load_knn, load_labels, load_weighted, save_clusters, save_features, save_knn,
    save_labels, save_weighted,
};
use nasa_cli::FormatError;
use nasa_core::cluster::ClusterAssignment;
use nasa_core::config::{PipelineConfig, Preset};
use nasa_core::gcn::GcnModel;
use nasa_core::graph::{build_knn, Edge, EmbeddingSet, LabelVector, WeightedGraph};
use nasa_core::linalg::Matrix;
use nasa_core::linker::NasaModel;
use nasa_core::synth::{synth_generate, ClassSizes, SynthSpec};
use proptest::prelude::*;

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("formats").join(name);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn small_set(n_classes: usize, seed: u64) -> (EmbeddingSet, LabelVector) {
    synth_generate(&SynthSpec { classes: n_classes, sizes: ClassSizes::Fixed(6), dim: 8, noise: 0.2, seed }).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn features_round_trip_exactly(rows in 1usize..20, cols in 1usize..10, seed in any::<u64>()) {
        let dir = scratch("features");
        let path = dir.join(format!("f{seed}.bin"));
        let mut state = seed;
        // values representable in f32 survive the f32 payload unchanged
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                f64::from((state >> 40) as f32 / 16777216.0 - 0.5)
            })
            .collect();
        let e = EmbeddingSet::new(rows, cols, data).unwrap();
        save_features(&e, &path).unwrap();
        let back = load_features(&path, false).unwrap();
        prop_assert_eq!(back.matrix().as_slice(), e.matrix().as_slice());
    }

    #[test]
    fn labels_and_clusters_round_trip(values in prop::collection::vec(0usize..1000, 0..200)) {
        let dir = scratch("labels");
        let l = LabelVector::new(values.clone());
        save_labels(&l, &dir.join("l.txt")).unwrap();
        let back = load_labels(&dir.join("l.txt")).unwrap();
        prop_assert_eq!(back.as_slice(), l.as_slice());
        let c = ClusterAssignment::from_labels(&values);
        save_clusters(&c, &dir.join("c.txt")).unwrap();
        prop_assert_eq!(load_clusters(&dir.join("c.txt")).unwrap(), c);
    }

    #[test]
    fn weighted_graph_round_trip(weights in prop::collection::vec(prop::collection::vec(-1.0f64..=1.0, 0..6), 1..30)) {
        let n = weights.len();
        let lists: Vec<Vec<Edge>> = weights
            .iter()
            .enumerate()
            .map(|(i, ws)| {
                let mut l = vec![Edge { to: i, weight: 1.0 }];
                l.extend(ws.iter().enumerate().map(|(k, &w)| Edge { to: (i + k + 1) % n, weight: w }).filter(|e| e.to != i));
                l.dedup_by_key(|e| e.to);
                l
            })
            .collect();
        let Ok(g) = WeightedGraph::from_lists(lists) else { return Ok(()); };
        let path = scratch("graphs").join("g.bin");
        save_weighted(&g, &path).unwrap();
        prop_assert_eq!(load_weighted(&path).unwrap().to_lists(), g.to_lists());
    }
}

#[test]
fn knn_round_trip() {
    let (e, _) = small_set(5, 1);
    let knn = build_knn(&e, 7).unwrap();
    let path = scratch("knn").join("knn.bin");
    save_knn(&knn, &path).unwrap();
    let back = load_knn(&path).unwrap();
    assert_eq!(back.k(), 7);
    for i in 0..knn.len() {
        assert_eq!(back.neighbors(i), knn.neighbors(i));
    }
}

#[test]
fn truncated_feature_file_reports_size() {
    let dir = scratch("truncated");
    let (e, _) = small_set(2, 2);
    let path = dir.join("f.bin");
    save_features(&e, &path).unwrap();
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    match load_features(&path, true) {
        Err(FormatError::SizeMismatch { expected, actual, .. }) => {
            assert_eq!(expected, bytes.len());
            assert_eq!(actual, bytes.len() - 3);
        }
        other => panic!("expected a size mismatch, got {other:?}"),
    }
}

#[test]
fn missing_meta_is_an_error() {
    let dir = scratch("nometa");
    fs::write(dir.join("f.bin"), [0u8; 16]).unwrap();
    assert!(load_features(&dir.join("f.bin"), false).is_err());
}

#[test]
fn bad_label_line_is_a_parse_error() {
    let dir = scratch("badlabels");
    fs::write(dir.join("l.txt"), "1\n2\nx\n").unwrap();
    assert!(matches!(load_labels(&dir.join("l.txt")), Err(FormatError::Parse { .. })));
}

#[test]
fn corrupted_graph_is_rejected() {
    let dir = scratch("badgraph");
    let (e, _) = small_set(3, 3);
    let g = WeightedGraph::from_knn(&build_knn(&e, 4).unwrap());
    let path = dir.join("g.bin");
    save_weighted(&g, &path).unwrap();
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
    assert!(load_weighted(&path).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    fs::write(&path, &bad).unwrap();
    assert!(load_weighted(&path).is_err());
}

#[test]
fn linker_checkpoint_round_trip() {
    let cfg = PipelineConfig::preset(Preset::Synth);
    let model = NasaModel::new(8, cfg.nasa.clone()).unwrap();
    let tensors = model.named_tensors();
    let path = scratch("ckpt").join("nasa.ckpt");
    checkpoint::save(&tensors, &path).unwrap();
    let back = checkpoint::load(&path).unwrap();
    assert_eq!(back, tensors);
    let restored = NasaModel::from_named_tensors(&back, &cfg.nasa).unwrap();
    assert_eq!(restored.named_tensors(), tensors);
}

#[test]
fn gcn_checkpoint_round_trip() {
    let cfg = PipelineConfig::preset(Preset::Synth);
    let model = GcnModel::new(8, 4, &cfg.gcn).unwrap();
    let tensors = model.named_tensors();
    let bytes = checkpoint::encode(&tensors);
    let path = scratch("ckpt").join("gcn.ckpt");
    let back = checkpoint::decode(&path, &bytes).unwrap();
    assert_eq!(back, tensors);
    let restored = GcnModel::from_named_tensors(&back).unwrap();
    assert_eq!(restored.named_tensors(), tensors);
}

#[test]
fn corrupted_checkpoint_is_rejected() {
    let path = scratch("ckpt").join("bad.ckpt");
    let tensors = vec![("w".to_string(), Matrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap())];
    let bytes = checkpoint::encode(&tensors);
    assert!(checkpoint::decode(&path, &bytes[..bytes.len() - 1]).is_err());
    assert!(checkpoint::decode(&path, &[bytes.as_slice(), &[0]].concat()).is_err());
    let mut bad = bytes.clone();
    bad[0] ^= 0xff;
    assert!(checkpoint::decode(&path, &bad).is_err());
}
