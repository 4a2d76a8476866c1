use emergency_core::classifiers::{
    grid_search_cv, train, ForestParams, Gamma, HyperparameterSpec, KernelKind, MlpParams, SvmParams,
};
use emergency_core::data::{ClassLabel, Dataset, TransportMode};
use emergency_core::pipeline::{dataset_samples, pooled};
use emergency_core::synth::{generate_dataset, ScenarioCount, ScenarioKind, SynthPlan};
use emergency_core::tracking::TrackerConfig;

fn clean_walking(videos: usize, seed: u64) -> Dataset {
    generate_dataset(&SynthPlan {
        mode: TransportMode::Walking,
        duration_frames: 40,
        noise_px: 0.0,
        dropout_rate: 0.0,
        seed,
        scenarios: vec![
            ScenarioCount { kind: ScenarioKind::Walk, count: videos / 2 },
            ScenarioCount { kind: ScenarioKind::FallDuringWalk, count: videos - videos / 2 },
        ],
    })
    .unwrap()
}

fn specs() -> Vec<HyperparameterSpec> {
    vec![
        HyperparameterSpec::Svm(SvmParams { c: 10.0, kernel: KernelKind::Rbf, degree: 2, gamma: Gamma::Value(0.5) }),
        HyperparameterSpec::RandomForest(ForestParams { n_trees: 25, max_depth: None, min_samples_leaf: 1, max_features_fraction: 0.3 }),
        HyperparameterSpec::Mlp(MlpParams { hidden_layers: vec![32], learning_rate: 0.05, epochs: 40, l2_penalty: 0.0 }),
    ]
}

#[test]
fn every_family_fits_clean_synthetic_data() {
    let data = clean_walking(10, 3);
    let samples = dataset_samples(&data, &TrackerConfig::default());
    let all: Vec<usize> = (0..samples.len()).collect();
    let (x, y) = pooled(&samples, &all);
    for spec in specs() {
        let model = train(&spec, &x, &y, 2, 5).unwrap();
        let correct = x.iter().zip(&y).filter(|(row, l)| model.predict(row).unwrap() == **l).count();
        let accuracy = correct as f64 / x.len() as f64;
        assert!(accuracy >= 0.99, "{}: {accuracy}", spec.describe());
    }
}

#[test]
fn training_is_bit_identical_per_seed() {
    let data = clean_walking(4, 9);
    let samples = dataset_samples(&data, &TrackerConfig::default());
    let (x, y) = pooled(&samples, &[0, 1, 2, 3]);
    for spec in specs() {
        let a = train(&spec, &x, &y, 2, 42).unwrap();
        let b = train(&spec, &x, &y, 2, 42).unwrap();
        assert_eq!(a, b, "{}", spec.describe());
        for row in x.iter().take(50) {
            let (sa, sb) = (a.decision_scores(row).unwrap(), b.decision_scores(row).unwrap());
            assert!(sa.iter().zip(&sb).all(|(p, q)| p.to_bits() == q.to_bits()));
            assert!(sa.iter().all(|s| s.is_finite()));
        }
    }
}

#[test]
fn forest_scores_are_probability_vectors() {
    let data = clean_walking(4, 2);
    let samples = dataset_samples(&data, &TrackerConfig::default());
    let (x, y) = pooled(&samples, &[0, 1, 2, 3]);
    let model = train(&specs()[1], &x, &y, 2, 1).unwrap();
    for row in &x {
        let s = model.decision_scores(row).unwrap();
        assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn binary_svm_argmax_is_the_margin_sign() {
    let data = clean_walking(4, 6);
    let samples = dataset_samples(&data, &TrackerConfig::default());
    let (x, y) = pooled(&samples, &[0, 1, 2, 3]);
    let model = train(&specs()[0], &x, &y, 2, 0).unwrap();
    for row in &x {
        let s = model.decision_scores(row).unwrap();
        assert_eq!(s[0], -s[1]);
        assert_eq!(model.predict(row).unwrap() == ClassLabel::Emergency, s[1] > 0.0);
    }
}

#[test]
fn grid_search_prefers_the_capable_spec() {
    let data = clean_walking(12, 4);
    let crippled =
        HyperparameterSpec::RandomForest(ForestParams { n_trees: 1, max_depth: Some(1), min_samples_leaf: 200, max_features_fraction: 0.01 });
    let grid = vec![crippled, specs()[1].clone()];
    let outcome = grid_search_cv(&grid, &data, 3, 7, &TrackerConfig::default()).unwrap();
    assert_eq!(outcome.best_index, 1, "{:?}", outcome.scores.iter().map(|s| s.mean_recall).collect::<Vec<_>>());
    assert_eq!(outcome.scores[0].fold_recalls.len(), 3);
    let again = grid_search_cv(&grid, &data, 3, 7, &TrackerConfig::default()).unwrap();
    assert_eq!(outcome, again);
}
