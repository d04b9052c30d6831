mod common;

use cogload::featsel::{
    anova_f, fit_extra_trees, pca_fit, population_variances, variance_threshold, ExtraTreesConfig, FeatureMatrix, ImportanceRanking,
};
use ndarray::{Array2, Axis};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("feat_{i:03}")).collect()
}

fn random_matrix(seed: u64, rows: usize, cols: usize) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FeatureMatrix::new(Array2::from_shape_fn((rows, cols), |_| rng.random_range(-3.0..3.0)), names(cols)).unwrap()
}

fn random_labels(seed: u64, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
    y[0] = 0;
    y[1] = 1;
    y[2] = 2;
    y
}

#[test]
fn anova_matches_brute_force() {
    for seed in 0..10 {
        let x = random_matrix(seed, 40, 6);
        let y = random_labels(seed + 100, 40);
        let f = anova_f(&x, &y).unwrap();
        for (j, col) in x.values.columns().into_iter().enumerate() {
            let oracle = common::brute_anova(&col.to_vec(), &y);
            assert!((f[j] - oracle).abs() <= 1e-9 * oracle.abs().max(1.0), "seed {seed} col {j}: {} vs {oracle}", f[j]);
        }
    }
}

#[test]
fn anova_after_shuffling_rows_within_a_feature() {
    // permuting a feature's values across samples keeps N, C and totals
    let x = random_matrix(3, 60, 1);
    let y = random_labels(4, 60);
    let mut values: Vec<f64> = x.values.column(0).to_vec();
    values.reverse();
    values.rotate_left(7);
    let shuffled = FeatureMatrix::new(Array2::from_shape_vec((60, 1), values.clone()).unwrap(), names(1)).unwrap();
    let f = anova_f(&shuffled, &y).unwrap()[0];
    let oracle = common::brute_anova(&values, &y);
    assert!((f - oracle).abs() <= 1e-9 * oracle.max(1.0));
}

#[test]
fn pca_matches_jacobi_eigenvalues() {
    for seed in 0..5 {
        let x = random_matrix(seed, 6, 4);
        let m = pca_fit(&x, 4).unwrap();
        let centered = &x.values - &x.values.mean_axis(Axis(0)).unwrap();
        let cov = centered.t().dot(&centered) / 5.0;
        let eig = common::jacobi_eigenvalues(&cov.iter().copied().collect::<Vec<_>>(), 4);
        for (a, b) in m.explained_variance.iter().zip(&eig) {
            assert!((a - b.max(0.0)).abs() <= 1e-8, "{a} vs {b}");
        }
        let gram = m.components.dot(&m.components.t());
        for ((i, j), v) in gram.indexed_iter() {
            let target = if i == j { 1.0 } else { 0.0 };
            assert!((v - target).abs() <= 1e-8);
        }
    }
}

#[test]
fn ranking_export_parses_back() {
    let x = random_matrix(9, 50, 5);
    let y = random_labels(10, 50);
    let (_, ranking) = fit_extra_trees(&x, &y, &ExtraTreesConfig { n_trees: 10, ..Default::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ranking.csv");
    ranking.save_csv(&path).unwrap();
    let mut reader = csv::Reader::from_path(&path).unwrap();
    assert_eq!(reader.headers().unwrap(), vec!["rank", "feature_name", "score", "method"]);
    for (i, (row, entry)) in reader.records().zip(&ranking.entries).enumerate() {
        let row = row.unwrap();
        assert_eq!(row[0].parse::<usize>().unwrap(), i + 1);
        assert_eq!(&row[1], entry.name);
        assert_eq!(row[2].parse::<f64>().unwrap(), entry.score);
        assert_eq!(&row[3], "extra_trees");
    }
}

#[test]
fn extra_trees_is_deterministic_and_seed_sensitive() {
    let x = random_matrix(11, 80, 8);
    let y = random_labels(12, 80);
    let cfg = ExtraTreesConfig { n_trees: 20, seed: 5, ..Default::default() };
    let a = fit_extra_trees(&x, &y, &cfg).unwrap();
    let b = fit_extra_trees(&x, &y, &cfg).unwrap();
    assert_eq!(a, b);
    let c = fit_extra_trees(&x, &y, &ExtraTreesConfig { seed: 6, ..cfg }).unwrap();
    assert_ne!(a.1, c.1);
}

fn score_map(r: &ImportanceRanking) -> std::collections::BTreeMap<String, f64> {
    r.entries.iter().map(|e| (e.name.clone(), e.score)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tree_importances_are_a_distribution_and_follow_column_permutations(
        seed in 0u64..1000,
        rotate in 1usize..6,
    ) {
        let x = random_matrix(seed, 45, 6);
        let y = random_labels(seed ^ 77, 45);
        let cfg = ExtraTreesConfig { n_trees: 8, seed, ..Default::default() };
        let (_, r) = fit_extra_trees(&x, &y, &cfg).unwrap();
        let total: f64 = r.entries.iter().map(|e| e.score).sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
        prop_assert!(r.entries.iter().all(|e| e.score >= 0.0));
        prop_assert!(r.entries.windows(2).all(|w| w[0].score >= w[1].score));

        let mut order: Vec<usize> = (0..6).collect();
        order.rotate_left(rotate);
        let permuted = FeatureMatrix::new(
            x.values.select(Axis(1), &order),
            order.iter().map(|&i| x.names[i].clone()).collect(),
        ).unwrap();
        let (_, rp) = fit_extra_trees(&permuted, &y, &cfg).unwrap();
        prop_assert_eq!(score_map(&r), score_map(&rp));
    }

    #[test]
    fn anova_invariances(seed in 0u64..1000, shift in -50.0f64..50.0, scale in prop_oneof![-20.0f64..-0.05, 0.05f64..20.0]) {
        let x = random_matrix(seed, 30, 3);
        let y = random_labels(seed ^ 5, 30);
        let base = anova_f(&x, &y).unwrap();
        let moved = FeatureMatrix::new(x.values.mapv(|v| v * scale + shift), x.names.clone()).unwrap();
        let relabeled: Vec<usize> = y.iter().map(|&l| (l + 1) % 3).collect();
        for (a, b) in base.iter().zip(anova_f(&moved, &y).unwrap()) {
            prop_assert!((a - b).abs() <= 1e-8 * a.max(1.0));
        }
        for (a, b) in base.iter().zip(anova_f(&x, &relabeled).unwrap()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn variance_mask_is_monotone(seed in 0u64..1000, t1 in 0.0f64..4.0, dt in 0.0f64..4.0) {
        let x = random_matrix(seed, 12, 8);
        let loose = variance_threshold(&x, t1);
        let tight = variance_threshold(&x, t1 + dt);
        prop_assert!(tight.iter().zip(&loose).all(|(t, l)| !t || *l));
        let var = population_variances(&x);
        prop_assert!(var.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn pca_components_orthonormal_and_sorted(seed in 0u64..1000, rows in 3usize..20, cols in 2usize..7) {
        let x = random_matrix(seed, rows, cols);
        let k = rows.min(cols);
        let m = pca_fit(&x, k).unwrap();
        let gram = m.components.dot(&m.components.t());
        for ((i, j), v) in gram.indexed_iter() {
            let target = if i == j { 1.0 } else { 0.0 };
            prop_assert!((v - target).abs() <= 1e-8);
        }
        prop_assert!(m.explained_variance.windows(2).into_iter().all(|w| w[0] >= w[1]));
        prop_assert!(m.explained_variance.iter().all(|v| *v >= 0.0));
        for row in m.components.rows() {
            let pivot = row.iter().fold(0.0f64, |b, &v| if v.abs() > b.abs() { v } else { b });
            prop_assert!(pivot > 0.0);
        }
    }
}
