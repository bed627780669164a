use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use voxtriage::learners::{
    fit, AlgorithmKind, AlgorithmSpec, Dataset, Features, Hyperparameters, LearnError, Model,
    ModelParams, Row,
};

fn row(features: Features, label: u8, subject: &str, t: i64) -> Row {
    Row {
        features,
        label,
        subject_id: subject.to_string(),
        recorded_at: t,
    }
}

fn pad(a: f64, b: f64) -> Features {
    [a, b, 0.0, 0.0, 0.0, 0.0, 0.0]
}

/// Two Gaussian blobs separated by `shift` along every axis.
fn blobs(n0: usize, n1: usize, shift: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for i in 0..n0 + n1 {
        let label = u8::from(i >= n0);
        let mut f = [0.0; 7];
        for v in &mut f {
            let z: f64 = rng.sample(StandardNormal);
            *v = z + shift * f64::from(label);
        }
        rows.push(row(f, label, &format!("S{}", i % 6), i as i64));
    }
    Dataset::new(rows).unwrap()
}

/// Specs with reduced ensemble sizes so tests stay quick.
fn quick_specs(seed: u64) -> Vec<AlgorithmSpec> {
    AlgorithmKind::ALL
        .iter()
        .map(|&k| {
            let mut s = AlgorithmSpec::new(k, seed);
            match &mut s.params {
                Hyperparameters::Forest { n_trees, .. } => *n_trees = 25,
                Hyperparameters::Boosting { n_trees, .. } => *n_trees = 30,
                _ => {}
            }
            s
        })
        .collect()
}

#[test]
fn gaussian_nb_matches_hand_computation() {
    // class 0 at x ∈ {0, 2}, class 1 at x ∈ {4, 6}; other features constant
    let data = Dataset::new(vec![
        row(pad(0.0, 0.0), 0, "a", 0),
        row(pad(2.0, 0.0), 0, "a", 1),
        row(pad(4.0, 0.0), 1, "b", 0),
        row(pad(6.0, 0.0), 1, "b", 1),
    ])
    .unwrap();
    let model = fit(
        &AlgorithmSpec::new(AlgorithmKind::GaussianNaiveBayes, 0),
        &data,
    )
    .unwrap();
    // means 1 and 5, population variance 1, priors equal; the constant
    // features share the same floored variance in both classes and cancel
    let x = pad(2.5, 0.0);
    let l0 = -0.5 * (2.5f64 - 1.0).powi(2);
    let l1 = -0.5 * (2.5f64 - 5.0).powi(2);
    let expected = l1.exp() / (l0.exp() + l1.exp());
    let got = model.predict_proba(&x).unwrap();
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    assert!((model.predict_proba(&pad(3.0, 0.0)).unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn gaussian_nb_corner_classes() {
    let data = Dataset::new(vec![
        row([0.0; 7], 0, "a", 0),
        row([0.0; 7], 0, "a", 1),
        row([1.0; 7], 1, "b", 0),
        row([1.0; 7], 1, "b", 1),
    ])
    .unwrap();
    let model = fit(
        &AlgorithmSpec::new(AlgorithmKind::GaussianNaiveBayes, 0),
        &data,
    )
    .unwrap();
    let ModelParams::GaussianNb(nb) = &model.params else {
        panic!()
    };
    assert_eq!(nb.means, [[0.0; 7], [1.0; 7]]);
    assert!(model.predict_proba(&[0.0; 7]).unwrap() < 0.01);
    assert!(model.predict_proba(&[1.0; 7]).unwrap() > 0.99);
}

#[test]
fn logistic_regression_is_confident_deep_in_class_one() {
    let data = blobs(20, 20, 4.0, 9);
    let model = fit(
        &AlgorithmSpec::new(AlgorithmKind::LogisticRegression, 0),
        &data,
    )
    .unwrap();
    assert!(model.predict_proba(&[6.0; 7]).unwrap() > 0.9);
    assert!(model.predict_proba(&[-2.0; 7]).unwrap() < 0.1);
}

#[test]
fn decision_tree_separates_pure_split() {
    let data = Dataset::new(vec![
        row(pad(0.1, 5.0), 0, "a", 0),
        row(pad(0.2, 1.0), 0, "a", 1),
        row(pad(0.3, 3.0), 0, "b", 0),
        row(pad(0.7, 2.0), 1, "b", 1),
        row(pad(0.8, 4.0), 1, "c", 0),
        row(pad(0.9, 0.0), 1, "c", 1),
    ])
    .unwrap();
    let model = fit(&AlgorithmSpec::new(AlgorithmKind::DecisionTree, 0), &data).unwrap();
    let ModelParams::Tree(tree) = &model.params else {
        panic!("expected tree")
    };
    assert_eq!(tree.nodes.len(), 3);
    assert_eq!(model.predict_proba(&pad(0.0, 9.0)).unwrap(), 0.0);
    assert_eq!(model.predict_proba(&pad(1.0, 9.0)).unwrap(), 1.0);
    assert_eq!(model.predict_proba(&pad(0.5, 9.0)).unwrap(), 0.0);
    assert_eq!(model.predict_proba(&pad(0.51, 9.0)).unwrap(), 1.0);
}

#[test]
fn knn_exact_match_uses_matching_points_only() {
    let data = Dataset::new(vec![
        row(pad(0.0, 0.0), 1, "a", 0),
        row(pad(0.0, 0.0), 0, "a", 1),
        row(pad(0.0, 0.0), 1, "a", 2),
        row(pad(0.1, 0.0), 0, "b", 0),
        row(pad(0.2, 0.0), 0, "b", 1),
        row(pad(9.0, 0.0), 1, "c", 0),
    ])
    .unwrap();
    let model = fit(
        &AlgorithmSpec::new(AlgorithmKind::KNearestNeighbors, 0),
        &data,
    )
    .unwrap();
    assert!((model.predict_proba(&pad(0.0, 0.0)).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    // inverse-distance weights over the five nearest
    let q = pad(0.05, 0.0);
    let w = |d: f64| 1.0 / d;
    let ones = 2.0 * w(0.05);
    let all = 3.0 * w(0.05) + w(0.05) + w(0.15);
    assert!((model.predict_proba(&q).unwrap() - ones / all).abs() < 1e-9);
}

/// Gradient of `C Σ wᵢ logloss + ½‖β‖²`, evaluated independently of the
/// fitting code.
fn logistic_gradient(data: &Dataset, coef: &Features, intercept: f64, balanced: bool) -> [f64; 8] {
    let [n0, n1] = data.class_counts();
    let n = (n0 + n1) as f64;
    let cw = if balanced {
        [n / (2.0 * n0 as f64), n / (2.0 * n1 as f64)]
    } else {
        [1.0, 1.0]
    };
    let mut g = [0.0; 8];
    for r in data.rows() {
        let z = intercept + r.features.iter().zip(coef).map(|(a, b)| a * b).sum::<f64>();
        let p = 1.0 / (1.0 + (-z).exp());
        let e = cw[usize::from(r.label)] * (p - f64::from(r.label));
        for (gf, x) in g.iter_mut().zip(&r.features) {
            *gf += e * x;
        }
        g[7] += e;
    }
    for f in 0..7 {
        g[f] += coef[f];
    }
    g
}

#[test]
fn logistic_regression_reaches_stationary_point() {
    for balanced in [true, false] {
        let data = blobs(40, 25, 0.8, 3);
        let mut spec =
            AlgorithmSpec::new(AlgorithmKind::LogisticRegression, 0).with_balanced(balanced);
        if let Hyperparameters::Logistic { max_iter, tol, .. } = &mut spec.params {
            *max_iter = 200_000;
            *tol = 0.0;
        }
        let model = fit(&spec, &data).unwrap();
        let ModelParams::Logistic(lr) = &model.params else {
            panic!()
        };
        let g = logistic_gradient(&data, &lr.coefficients, lr.intercept, balanced);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-6, "gradient norm {norm}");
    }
}

#[test]
fn random_forest_is_deterministic_per_seed() {
    let data = blobs(30, 30, 0.7, 5);
    let spec = |seed| {
        let mut s = AlgorithmSpec::new(AlgorithmKind::RandomForest, seed);
        if let Hyperparameters::Forest { n_trees, .. } = &mut s.params {
            *n_trees = 40;
        }
        s
    };
    let a = fit(&spec(11), &data).unwrap();
    let b = fit(&spec(11), &data).unwrap();
    let c = fit(&spec(12), &data).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn separable_data_is_learned_by_every_algorithm() {
    let data = blobs(30, 30, 6.0, 8);
    for spec in quick_specs(1) {
        let model = fit(&spec, &data).unwrap();
        let lo = model.predict_proba(&[0.0; 7]).unwrap();
        let hi = model.predict_proba(&[6.0; 7]).unwrap();
        assert!(lo < 0.3 && hi > 0.7, "{}: {lo} {hi}", spec.kind);
    }
}

#[test]
fn degenerate_training_sets_are_rejected() {
    let spec = AlgorithmSpec::new(AlgorithmKind::LogisticRegression, 0);
    assert_eq!(fit(&spec, &Dataset::default()), Err(LearnError::EmptyData));
    let one = Dataset::new(vec![
        row(pad(1.0, 0.0), 1, "a", 0),
        row(pad(2.0, 0.0), 1, "a", 1),
    ])
    .unwrap();
    assert_eq!(fit(&spec, &one), Err(LearnError::SingleClassData));
    assert_eq!(
        Dataset::new(vec![row(pad(f64::NAN, 0.0), 1, "a", 0)]),
        Err(LearnError::NonFiniteInput)
    );
    let data = blobs(5, 5, 1.0, 0);
    let model = fit(&spec, &data).unwrap();
    assert_eq!(
        model.predict_proba(&pad(f64::INFINITY, 0.0)),
        Err(LearnError::NonFiniteInput)
    );
}

#[test]
fn json_round_trip_preserves_predictions() {
    let data = blobs(20, 15, 1.0, 21);
    let probes = blobs(5, 5, 0.5, 22);
    for spec in quick_specs(4) {
        let model = fit(&spec, &data).unwrap();
        let text = model.to_json();
        let back = Model::from_json(&text).unwrap();
        assert_eq!(back, model, "{}", spec.kind);
        for r in probes.rows() {
            assert_eq!(
                back.predict_proba(&r.features).unwrap().to_bits(),
                model.predict_proba(&r.features).unwrap().to_bits()
            );
        }
    }
}

#[test]
fn model_documents_are_checked() {
    let data = blobs(5, 5, 1.0, 0);
    let model = fit(
        &AlgorithmSpec::new(AlgorithmKind::GaussianNaiveBayes, 0),
        &data,
    )
    .unwrap();
    let bumped = model.to_json().replace("\"version\":1", "\"version\":99");
    assert!(matches!(
        Model::from_json(&bumped),
        Err(LearnError::Format(_))
    ));
    assert!(matches!(Model::from_json("{}"), Err(LearnError::Format(_))));
}

#[test]
fn algorithm_names_parse() {
    for k in AlgorithmKind::ALL {
        assert_eq!(k.name().parse::<AlgorithmKind>().unwrap(), k);
    }
    assert_eq!(
        "svm_rbf".parse::<AlgorithmKind>().unwrap(),
        AlgorithmKind::SvmRbf
    );
    assert_eq!(
        "xgb".parse::<AlgorithmKind>().unwrap(),
        AlgorithmKind::GradientBoosting
    );
    assert!("MLP".parse::<AlgorithmKind>().is_err());
}

fn shuffled(data: &Dataset, seed: u64) -> Dataset {
    use rand::seq::SliceRandom;
    let mut rows = data.rows().to_vec();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Dataset::new(rows).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn fits_ignore_row_order(seed in 0u64..1000, shift in 0.0f64..2.0) {
        let data = blobs(12, 9, shift, seed);
        let other = shuffled(&data, seed ^ 0x5eed);
        for spec in quick_specs(seed) {
            let a = fit(&spec, &data).unwrap();
            let b = fit(&spec, &other).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn probabilities_stay_in_unit_interval(seed in 0u64..1000, shift in 0.0f64..3.0, q in prop::array::uniform7(-50.0f64..50.0)) {
        let data = blobs(10, 14, shift, seed);
        for spec in quick_specs(seed) {
            let p = fit(&spec, &data).unwrap().predict_proba(&q).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }

    /// Replicating the minority class until the classes are even moves an
    /// unweighted fit towards the balanced fit.
    #[test]
    fn minority_replication_approaches_balanced_fit(seed in 0u64..1000) {
        let data = blobs(12, 4, 1.0, seed);
        let mut rows = data.rows().to_vec();
        for (k, r) in data.rows().iter().enumerate().filter(|(_, r)| r.label == 1) {
            for c in 1..3 {
                let mut dup = r.clone();
                dup.recorded_at = 1000 * c + k as i64;
                rows.push(dup);
            }
        }
        let replicated = Dataset::new(rows).unwrap();
        prop_assert_eq!(replicated.class_counts(), [12, 12]);
        let probes = blobs(10, 10, 0.5, seed + 1);
        let predict = |m: &Model| -> Vec<f64> {
            probes.rows().iter().map(|r| m.predict_proba(&r.features).unwrap()).collect()
        };
        let gap = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum::<f64>();
        for kind in [AlgorithmKind::DecisionTree, AlgorithmKind::LogisticRegression] {
            let balanced = predict(&fit(&AlgorithmSpec::new(kind, 0), &data).unwrap());
            let plain = AlgorithmSpec::new(kind, 0).with_balanced(false);
            let before = predict(&fit(&plain, &data).unwrap());
            let after = predict(&fit(&plain, &replicated).unwrap());
            prop_assert!(gap(&after, &balanced) <= gap(&before, &balanced), "{}", kind);
        }
    }
}
