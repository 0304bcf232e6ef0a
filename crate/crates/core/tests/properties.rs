//! Randomized invariants across the pair-mining and scoring modules.

use std::collections::HashSet;

use ndarray::Array2;
use proptest::prelude::*;
use rpspectral::clustering::{ari, hubert_arabie_ari, pair_confusion, ClusteringError};
use rpspectral::dataset::{standardize, DataMatrix};
use rpspectral::pairing::{knn_pairs, rptree_pairs};
use rpspectral::rptree::{build_tree, ProjectionStrategy, RpTreeConfig, RpTreeNode};
use rpspectral::seeding::seeded_rng;
use rpspectral::siamese::AffinityBatch;
use rpspectral::spectralnet::{orthogonality_residual, orthogonalize, spectral_loss, spectral_loss_trace};

fn matrix(n: usize, d: usize) -> impl Strategy<Value = DataMatrix<f64>> {
    prop::collection::vec(-10.0..10.0f64, n * d)
        .prop_map(move |v| DataMatrix::new(Array2::from_shape_vec((n, d), v).unwrap()).unwrap())
}

fn sized_matrix(max_n: usize, max_d: usize) -> impl Strategy<Value = DataMatrix<f64>> {
    (2..=max_n, 1..=max_d).prop_flat_map(|(n, d)| matrix(n, d))
}

fn strategy() -> impl Strategy<Value = ProjectionStrategy> {
    prop_oneof![
        Just(ProjectionStrategy::Random),
        (1..6usize).prop_map(|n_try| ProjectionStrategy::BestOfN { n_try }),
        Just(ProjectionStrategy::Pca),
    ]
}

fn labels(n: usize, k: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..k, n)
}

/// Reference pair counts by explicit enumeration.
fn enumerate(t: &[usize], l: &[usize]) -> (u64, u64, u64, u64) {
    let (mut n11, mut n00, mut n10, mut n01) = (0, 0, 0, 0);
    for i in 0..t.len() {
        for j in i + 1..t.len() {
            match (t[i] == t[j], l[i] == l[j]) {
                (true, true) => n11 += 1,
                (false, false) => n00 += 1,
                (true, false) => n10 += 1,
                (false, true) => n01 += 1,
            }
        }
    }
    (n11, n00, n10, n01)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tree_leaves_partition_the_points(
        data in sized_matrix(300, 6),
        leaf_size in 1..40usize,
        strategy in strategy(),
        seed in any::<u64>(),
    ) {
        let tree = build_tree(&data, &RpTreeConfig::new(leaf_size, strategy, seed)).unwrap();
        let mut seen = vec![false; data.n()];
        for (leaf, degenerate) in tree.leaves().iter().zip(tree.leaf_flags()) {
            prop_assert!(!leaf.is_empty());
            prop_assert!(degenerate || leaf.len() <= leaf_size);
            for &i in leaf.iter() {
                prop_assert!(!seen[i], "point {} in two leaves", i);
                seen[i] = true;
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
        for node in tree.root().internal_nodes() {
            if let RpTreeNode::Internal { direction, threshold, range, .. } = node {
                prop_assert!((direction.norm() - 1.0).abs() < 1e-9);
                let width = range.1 - range.0;
                prop_assert!(*threshold >= range.0 + 0.25 * width - 1e-9);
                prop_assert!(*threshold <= range.0 + 0.75 * width + 1e-9);
            }
        }
    }

    #[test]
    fn tree_pairs_are_consistent(data in sized_matrix(200, 4), leaf_size in 2..30usize, seed in any::<u64>()) {
        let tree = build_tree(&data, &RpTreeConfig::new(leaf_size, ProjectionStrategy::Random, seed)).unwrap();
        let pairs = rptree_pairs(&tree, &mut seeded_rng(seed));
        let n = data.n();
        let leaf_of: Vec<usize> = {
            let mut v = vec![0; n];
            for (l, leaf) in tree.leaves().iter().enumerate() {
                for &i in leaf.iter() {
                    v[i] = l;
                }
            }
            v
        };
        let positives: HashSet<_> = pairs.positives.iter().copied().collect();
        for &(i, j) in &pairs.positives {
            prop_assert!(i < j && j < n);
            prop_assert_eq!(leaf_of[i], leaf_of[j]);
        }
        for &(i, j) in &pairs.negatives {
            prop_assert!(i < j && j < n);
            prop_assert_ne!(leaf_of[i], leaf_of[j]);
            prop_assert!(!positives.contains(&(i, j)));
        }
        prop_assert!(pairs.positives.windows(2).all(|w| w[0] < w[1]));
        let expected: usize = tree.leaves().iter().map(|l| l.len() * (l.len() - 1) / 2).sum();
        prop_assert_eq!(pairs.positives.len(), expected);
        prop_assert_eq!(pairs.raw_positive_count, 2 * expected);
        if !tree.leaf_flags().iter().any(|&d| d) {
            prop_assert!(pairs.positives.len() <= n * (leaf_size - 1) / 2);
        }
    }

    #[test]
    fn knn_positives_match_distance_sort(data in sized_matrix(60, 3), k in 1..4usize, seed in any::<u64>()) {
        prop_assume!(k < data.n());
        let pairs = knn_pairs(&data, k, &mut seeded_rng(seed)).unwrap();
        prop_assert_eq!(pairs.raw_positive_count, data.n() * k);
        let mut expected = HashSet::new();
        for i in 0..data.n() {
            let mut others: Vec<(f64, usize)> = (0..data.n())
                .filter(|&j| j != i)
                .map(|j| {
                    let d: f64 = data.row(i).iter().zip(data.row(j).iter()).map(|(a, b)| (a - b).powi(2)).sum();
                    (d, j)
                })
                .collect();
            others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            for &(_, j) in others.iter().take(k) {
                expected.insert((i.min(j), i.max(j)));
            }
        }
        let got: HashSet<_> = pairs.positives.iter().copied().collect();
        prop_assert_eq!(got, expected.clone());
        for p in &pairs.negatives {
            prop_assert!(!expected.contains(p));
        }
    }

    #[test]
    fn confusion_counts_match_enumeration((t, l) in (2..=12usize).prop_flat_map(|n| (labels(n, 4), labels(n, 4)))) {
        let c = pair_confusion(&t, &l).unwrap();
        prop_assert_eq!((c.n11, c.n00, c.n10, c.n01), enumerate(&t, &l));
        let n = t.len() as u64;
        prop_assert_eq!(c.total(), n * (n - 1) / 2);
    }

    #[test]
    fn ari_is_symmetric_bounded_and_label_invariant(
        (t, l) in (2..=40usize).prop_flat_map(|n| (labels(n, 5), labels(n, 5))),
        shift in 1..7usize,
    ) {
        match ari(&t, &l) {
            Ok(a) => {
                prop_assert!((-1.0..=1.0).contains(&a));
                prop_assert!((a - ari(&l, &t).unwrap()).abs() < 1e-12);
                let renamed: Vec<usize> = l.iter().map(|&x| (x + shift) % 5 + 10).collect();
                prop_assert_eq!(a, ari(&t, &renamed).unwrap());
                let h = hubert_arabie_ari(&t, &l).unwrap().unwrap();
                prop_assert!((a - h).abs() < 1e-12);
            }
            Err(e) => prop_assert!(matches!(e, ClusteringError::DegeneratePartition)),
        }
    }

    #[test]
    fn standardize_moments(data in sized_matrix(50, 4)) {
        let z = standardize(&data);
        let n = z.n() as f64;
        for c in 0..z.dim() {
            let col = z.points().column(c);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let constant = data.points().column(c).iter().all(|&v| v == data.points()[[0, c]]);
            prop_assert!(mean.abs() < 1e-10);
            if constant {
                prop_assert!(col.iter().all(|&v| v == 0.0));
            } else {
                prop_assert!((var - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn spectral_loss_identities(
        m in 3..12usize,
        g in 1..4usize,
        t in 0.1..5.0f64,
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = seeded_rng(seed);
        let mut a = Array2::from_shape_simple_fn((m, m), || rng.random_range(0.0..1.0f64));
        for i in 0..m {
            a[[i, i]] = 0.0;
            for j in 0..i {
                a[[i, j]] = a[[j, i]];
            }
        }
        let batch = AffinityBatch::new(a).unwrap();
        let y = Array2::from_shape_simple_fn((m, g), || rng.random_range(-2.0..2.0f64));
        let (loss, _) = spectral_loss(&batch, &y).unwrap();
        prop_assert!(loss >= 0.0);
        let trace = spectral_loss_trace(&batch, &y).unwrap();
        prop_assert!((loss - trace).abs() < 1e-10);
        let scaled = spectral_loss(&batch, &y.mapv(|v| v * t)).unwrap().0;
        prop_assert!((scaled - t * t * loss).abs() <= 1e-10 * (1.0 + scaled.abs()));
    }

    #[test]
    fn orthogonalization_whitens(m in 4..40usize, g in 1..4usize, seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = seeded_rng(seed);
        let raw = Array2::from_shape_simple_fn((m, g), || rng.random_range(-3.0..3.0f64));
        let (y, map) = orthogonalize(&raw, 0.0).unwrap();
        prop_assert!(orthogonality_residual(&y) <= 1e-6 * m as f64);
        prop_assert!(map.determinant().abs() > 1e-30);
    }
}
