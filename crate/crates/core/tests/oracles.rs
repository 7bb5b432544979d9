//! Randomized comparisons against brute-force reference implementations.

// Brute-force references index their dense matrices directly.
#![allow(clippy::needless_range_loop)]

use std::collections::{BTreeMap, VecDeque};

use nasa_core::cluster::{
    connected_components, estimate_density, peak_link, threshold_baseline, ClusterAssignment, DpcConfig,
};
use nasa_core::gcn::{gcn_layer, SparseAdjacency};
use nasa_core::graph::{build_knn, normalize_rows, subgraph_quality, Edge, LabelVector, WeightedGraph};
use nasa_core::linalg::Matrix;
use nasa_core::metrics::{bcubed_f, pairwise_f};
use nasa_core::nn::Selu;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Matrix {
    Matrix::new(rows, cols, data).unwrap()
}

fn gaussian_rows(max_n: usize, max_d: usize) -> impl Strategy<Value = Matrix> {
    (2..=max_n, 2..=max_d).prop_flat_map(|(n, d)| {
        prop::collection::vec(-1.0f64..1.0, n * d)
            .prop_filter("rows must be nonzero", move |v| v.chunks(d).all(|r| r.iter().any(|x| x.abs() > 1e-3)))
            .prop_map(move |v| matrix(n, d, v))
    })
}

fn naive_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s.clamp(-1.0, 1.0)
}

/// Component id per node by BFS, ids ordered by smallest member.
fn bfs_components(edges: &[(usize, usize)], n: usize) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = next;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &v in &adj[u] {
                if comp[v] == usize::MAX {
                    comp[v] = next;
                    q.push_back(v);
                }
            }
        }
        next += 1;
    }
    comp
}

fn pairwise_oracle(pred: &[usize], gt: &[usize]) -> (f64, f64) {
    let (mut tp, mut pp, mut gp) = (0u64, 0u64, 0u64);
    for i in 0..pred.len() {
        for j in i + 1..pred.len() {
            let same_p = pred[i] == pred[j];
            let same_g = gt[i] == gt[j];
            tp += u64::from(same_p && same_g);
            pp += u64::from(same_p);
            gp += u64::from(same_g);
        }
    }
    let r = |a: u64, b: u64| if b > 0 { a as f64 / b as f64 } else { 0.0 };
    (r(tp, pp), r(tp, gp))
}

fn bcubed_oracle(pred: &[usize], gt: &[usize]) -> (f64, f64) {
    let n = pred.len();
    let (mut p, mut r) = (0.0, 0.0);
    for i in 0..n {
        let same_c: Vec<usize> = (0..n).filter(|&j| pred[j] == pred[i]).collect();
        let same_l: Vec<usize> = (0..n).filter(|&j| gt[j] == gt[i]).collect();
        let both = same_c.iter().filter(|&&j| gt[j] == gt[i]).count() as f64;
        p += both / same_c.len() as f64;
        r += both / same_l.len() as f64;
    }
    (p / n as f64, r / n as f64)
}

fn random_graph(n: usize, max_deg: usize) -> impl Strategy<Value = WeightedGraph> {
    prop::collection::vec(prop::collection::btree_map(0..n, -1.0f64..=1.0, 0..=max_deg), n).prop_map(|maps| {
        let lists = maps
            .into_iter()
            .enumerate()
            .map(|(i, m)| {
                let mut l = vec![Edge { to: i, weight: 1.0 }];
                l.extend(m.into_iter().filter(|(to, _)| *to != i).map(|(to, weight)| Edge { to, weight }));
                l
            })
            .collect();
        WeightedGraph::from_lists(lists).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn knn_matches_full_sort(m in gaussian_rows(60, 8), k_frac in 0.0f64..1.0) {
        let e = normalize_rows(m).unwrap();
        let n = e.len();
        let k = 1 + ((n - 1) as f64 * k_frac) as usize;
        let knn = build_knn(&e, k).unwrap();
        for i in 0..n {
            let mut all: Vec<(usize, f64)> = (0..n)
                .map(|j| (j, if i == j { 1.0 } else { naive_cosine(e.row(i), e.row(j)) }))
                .collect();
            all.sort_by(|a, b| (a.0 != i).cmp(&(b.0 != i)).then(b.1.total_cmp(&a.1)).then(a.0.cmp(&b.0)));
            let got = knn.neighbors(i);
            prop_assert_eq!(got.len(), k);
            for (g, want) in got.iter().zip(&all) {
                prop_assert!((g.sim - want.1).abs() < 1e-12);
                // ids agree unless two similarities are within rounding of each other
                if g.id != want.0 {
                    prop_assert!((naive_cosine(e.row(i), e.row(g.id)) - want.1).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn components_match_bfs(n in 1usize..300, raw in prop::collection::vec((0usize..300, 0usize..300), 0..400)) {
        let edges: Vec<(usize, usize)> = raw.into_iter().map(|(a, b)| (a % n, b % n)).collect();
        let c = connected_components(&edges, n).unwrap();
        let expected = bfs_components(&edges, n);
        prop_assert_eq!(c.as_slice(), expected.as_slice());
        let mut rev = edges.clone();
        rev.reverse();
        prop_assert_eq!(connected_components(&rev, n).unwrap(), c);
    }

    #[test]
    fn fscores_match_pair_enumeration(
        pred in prop::collection::vec(0usize..12, 1..300),
        gt_seed in prop::collection::vec(0usize..12, 300),
    ) {
        let n = pred.len();
        let gt = gt_seed[..n].to_vec();
        let c = ClusterAssignment::from_labels(&pred);
        let l = LabelVector::new(gt.clone());
        let pf = pairwise_f(&c, &l).unwrap();
        let (p, r) = pairwise_oracle(c.as_slice(), &gt);
        prop_assert_eq!((pf.precision, pf.recall), (p, r));
        let bf = bcubed_f(&c, &l).unwrap();
        let (bp, br) = bcubed_oracle(c.as_slice(), &gt);
        prop_assert!((bf.precision - bp).abs() < 1e-12 && (bf.recall - br).abs() < 1e-12);
        // symmetric under relabeling
        let shifted: Vec<usize> = pred.iter().map(|x| 100 - x).collect();
        prop_assert_eq!(pairwise_f(&ClusterAssignment::from_labels(&shifted), &l).unwrap(), pf);
    }

    #[test]
    fn gcn_layer_matches_dense(
        n in 1usize..50,
        d_in in 1usize..6,
        d_out in 1usize..6,
        raw in prop::collection::vec((0usize..50, 0usize..50), 0..120),
        vals in prop::collection::vec(-1.0f64..1.0, 50 * 6 + 2 * 36),
    ) {
        let edges: Vec<(usize, usize)> = raw.into_iter().map(|(a, b)| (a % n, b % n)).collect();
        let mut lists = vec![Vec::new(); n];
        for &(a, b) in &edges {
            lists[a].push(b);
        }
        let adj = SparseAdjacency::from_lists(lists).unwrap();
        let f = matrix(n, d_in, vals[..n * d_in].to_vec());
        let w = matrix(d_in, d_out, vals[300..300 + d_in * d_out].to_vec());
        let ws = matrix(d_in, d_out, vals[336..336 + d_in * d_out].to_vec());
        let got = gcn_layer(&f, &adj, &w, &ws).unwrap();

        // dense Ã = A + I with union symmetrization, then D̃⁻¹ÃFW + FW_skip
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = 1.0;
        }
        for &(x, y) in &edges {
            a[x][y] = 1.0;
            a[y][x] = 1.0;
        }
        for i in 0..n {
            let deg: f64 = a[i].iter().sum();
            for o in 0..d_out {
                let mut z = 0.0;
                for j in 0..n {
                    for c in 0..d_in {
                        z += a[i][j] / deg * f.get(j, c) * w.get(c, o);
                    }
                }
                for c in 0..d_in {
                    z += f.get(i, c) * ws.get(c, o);
                }
                prop_assert!((got.get(i, o) - Selu::value(z)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn subgraph_quality_matches_count(g in random_graph(40, 8), labels in prop::collection::vec(0usize..5, 40), cutoff in -0.5f64..1.0) {
        let gt = LabelVector::new(labels.clone());
        let (mut kept, mut tk, mut tt) = (0usize, 0usize, 0usize);
        for i in 0..g.len() {
            for e in g.edges(i).iter().filter(|e| e.to != i) {
                let same = labels[i] == labels[e.to];
                kept += usize::from(e.weight >= cutoff);
                tk += usize::from(e.weight >= cutoff && same);
                tt += usize::from(same);
            }
        }
        match subgraph_quality(&g, &gt, cutoff) {
            Ok(q) => {
                prop_assert_eq!((q.kept, q.true_kept, q.true_total), (kept, tk, tt));
                prop_assert_eq!(q.precision, tk as f64 / kept as f64);
                prop_assert_eq!(q.recall, tk as f64 / tt as f64);
            }
            Err(_) => prop_assert!(kept == 0 || tt == 0),
        }
    }

    #[test]
    fn density_matches_direct_sum(g in random_graph(20, 10), k in 1usize..12, sigma in 0.01f64..1.0) {
        let cfg = DpcConfig { k_density: k, sigma, max_connections: 1, link_threshold: 0.0 };
        let rho = estimate_density(&g, &cfg).unwrap();
        for i in 0..g.len() {
            let mut want = 0.0;
            let mut taken = 0;
            for e in g.edges(i) {
                if e.to == i || taken == k {
                    continue;
                }
                want += (-(1.0 - e.weight) / sigma).exp();
                taken += 1;
            }
            prop_assert!((rho[i] - want).abs() < 1e-9);
        }
    }

    #[test]
    fn density_is_monotone_in_weights(g in random_graph(20, 10), bump in 0.0f64..0.5, node in 0usize..20) {
        let cfg = DpcConfig { k_density: 5, sigma: 0.1, max_connections: 1, link_threshold: 0.0 };
        let before = estimate_density(&g, &cfg).unwrap();
        let mut lists = g.to_lists();
        for e in lists[node].iter_mut().filter(|e| e.to != node) {
            e.weight = (e.weight + bump).min(1.0);
        }
        let after = estimate_density(&WeightedGraph::from_lists(lists).unwrap(), &cfg).unwrap();
        for (a, b) in after.iter().zip(&before) {
            prop_assert!(a >= b);
        }
    }

    #[test]
    fn peak_links_are_acyclic(g in random_graph(60, 8), max_conn in 1usize..4, gate in -1.0f64..1.0) {
        let cfg = DpcConfig { k_density: 5, sigma: 0.1, max_connections: max_conn, link_threshold: gate };
        let rho = estimate_density(&g, &cfg).unwrap();
        let links = peak_link(&g, &rho, &cfg).unwrap();
        let above = |a: usize, b: usize| (rho[b], b) > (rho[a], a);
        let mut per_node: BTreeMap<usize, usize> = BTreeMap::new();
        for &(a, b) in &links {
            prop_assert!(above(a, b));
            *per_node.entry(a).or_default() += 1;
        }
        prop_assert!(per_node.values().all(|&c| c <= max_conn));
    }

    #[test]
    fn raising_link_threshold_never_merges(g in random_graph(60, 8), lo in -1.0f64..1.0, step in 0.0f64..1.0) {
        let mk = |t| DpcConfig { k_density: 5, sigma: 0.1, max_connections: 2, link_threshold: t };
        let rho = estimate_density(&g, &mk(lo)).unwrap();
        let count = |t| connected_components(&peak_link(&g, &rho, &mk(t)).unwrap(), g.len()).unwrap().num_clusters();
        prop_assert!(count(lo + step) >= count(lo));
    }

    #[test]
    fn threshold_baseline_matches_bfs(g in random_graph(80, 6), tau in -1.0f64..1.0) {
        let mut edges = Vec::new();
        for i in 0..g.len() {
            for e in g.edges(i) {
                if e.to != i && e.weight >= tau {
                    edges.push((i, e.to));
                }
            }
        }
        let got = threshold_baseline(&g, tau);
        let expected = bfs_components(&edges, g.len());
        prop_assert_eq!(got.as_slice(), expected.as_slice());
    }
}
