use probe_oracle::datamodel::{EmbeddingDataset, ProbeMethod};
use probe_oracle::probekit::logreg::{self, LogReg};
use probe_oracle::probekit::mlp::{self, MlpShape};
use probe_oracle::probekit::{
    build_probe_matrix, run_battery, run_battery_with, select_best, softmax, subsample, train_samples, BuildOptions,
    ClassifierSpec, DecisionTree, ForestParams, MethodResult, Hyperparameters, RandomForest, Samples, TreeParams,
};
use probe_oracle::synth::{gen_embeddings, EmbeddingKind};
use probe_oracle::{keyed_rng, Error, Execution};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn test_accuracy(ds: &EmbeddingDataset, method: ProbeMethod) -> f64 {
    run_battery_with(ds, 11, &[method]).unwrap().results[0].test_accuracy
}

#[test]
fn separable_blobs_are_learned_by_linear_probes() {
    // class means 4σ either side of the boundary
    let ds = gen_embeddings(EmbeddingKind::Blobs, 8, 500, 8.0, 1).unwrap();
    assert!(test_accuracy(&ds, ProbeMethod::LogReg) >= 0.99);
    assert!(test_accuracy(&ds, ProbeMethod::SVM) >= 0.99);
}

#[test]
fn xor_needs_a_hidden_layer() {
    let ds = gen_embeddings(EmbeddingKind::Xor, 2, 500, 8.0, 2).unwrap();
    assert!(test_accuracy(&ds, ProbeMethod::MLP20) >= 0.95);
    assert!(test_accuracy(&ds, ProbeMethod::LogReg) <= 0.60);
    let out = run_battery_with(&ds, 5, &[ProbeMethod::LogReg, ProbeMethod::SVM, ProbeMethod::MLP10, ProbeMethod::MLP20]).unwrap();
    assert!(matches!(out.best, ProbeMethod::MLP10 | ProbeMethod::MLP20), "{:?}", out.best);
}

#[test]
fn null_data_stays_at_chance() {
    // averaging over seeds keeps the binomial error well inside the ±0.05 band
    let seeds = 5;
    let mut sums = [0.0; 7];
    for seed in 0..seeds {
        let ds = gen_embeddings(EmbeddingKind::Null, 4, 1000, 0.0, 100 + seed).unwrap();
        let out = run_battery(&ds, seed).unwrap();
        for (s, r) in sums.iter_mut().zip(&out.results) {
            *s += r.test_accuracy / seeds as f64;
        }
    }
    for (m, acc) in ProbeMethod::CLASSIFIERS.iter().zip(sums) {
        assert!((acc - 0.5).abs() <= 0.05, "{m:?} {acc}");
    }
}

#[test]
fn battery_is_deterministic() {
    let ds = gen_embeddings(EmbeddingKind::Blobs, 5, 60, 1.5, 9).unwrap();
    assert_eq!(run_battery(&ds, 4).unwrap(), run_battery(&ds, 4).unwrap());
}

#[test]
fn dev_ties_go_to_enum_order() {
    let results: Vec<MethodResult> = ProbeMethod::CLASSIFIERS
        .iter()
        .rev()
        .map(|&method| MethodResult {
            method,
            dev_accuracy: 0.7,
            test_accuracy: 0.6,
            hyperparameters: Hyperparameters::default_for(method),
        })
        .collect();
    assert_eq!(select_best(&results).unwrap().method, ProbeMethod::LogReg);
}

#[test]
fn single_class_training_is_rejected() {
    let s = Samples::new(1, vec![0.0, 1.0, 2.0], vec![1, 1, 1]);
    let err = train_samples(&ClassifierSpec::new(ProbeMethod::LogReg, 0), &s, 2).unwrap_err();
    assert!(matches!(err, Error::DegenerateData(_)));
}

fn random_samples(seed: u64, n: usize, dim: usize, classes: usize) -> Samples {
    let mut rng = keyed_rng!(seed, "samples");
    let x = (0..n * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let y = (0..n).map(|i| if i < classes { i } else { rng.random_range(0..classes) }).collect();
    Samples::new(dim, x, y)
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[test]
fn logreg_gradient_matches_finite_differences() {
    for seed in 0..5 {
        let s = random_samples(seed, 12, 4, 3);
        let mut rng = keyed_rng!(seed, "params");
        let p: Vec<f64> = (0..3 * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, g) = logreg::loss_and_grad(&p, &s, 3, 0.1);
        for j in 0..p.len() {
            let (mut hi, mut lo) = (p.clone(), p.clone());
            hi[j] += 1e-5;
            lo[j] -= 1e-5;
            let fd = (logreg::loss_and_grad(&hi, &s, 3, 0.1).0 - logreg::loss_and_grad(&lo, &s, 3, 0.1).0) / 2e-5;
            assert!(relative_error(fd, g[j]) < 1e-4, "param {j}: {fd} vs {}", g[j]);
        }
    }
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    for seed in 0..5 {
        let s = random_samples(seed, 10, 3, 2);
        let shape = MlpShape {
            inputs: 3,
            hidden: 6,
            outputs: 2,
        };
        let p = mlp::init_params(shape, &mut keyed_rng!(seed, "init"));
        // nonzero biases so that few hidden units sit exactly at the kink
        let p: Vec<f64> = p.iter().enumerate().map(|(i, v)| v + 0.01 * (i as f64).sin()).collect();
        let idx: Vec<usize> = (0..s.len()).collect();
        let (_, g) = mlp::loss_and_grad(shape, &p, &s, &idx, 0.01);
        for j in 0..p.len() {
            let (mut hi, mut lo) = (p.clone(), p.clone());
            hi[j] += 1e-5;
            lo[j] -= 1e-5;
            let fd = (mlp::loss_and_grad(shape, &hi, &s, &idx, 0.01).0 - mlp::loss_and_grad(shape, &lo, &s, &idx, 0.01).0) / 2e-5;
            assert!(relative_error(fd, g[j]) < 1e-4, "param {j}: {fd} vs {}", g[j]);
        }
    }
}

proptest! {
    #[test]
    fn softmax_sums_to_one(z in prop::collection::vec(-700.0f64..700.0, 1..12)) {
        let p = softmax(&z);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn logreg_probabilities_sum_to_one() {
    let s = random_samples(3, 40, 3, 4);
    let m = LogReg::fit(&s, 4, 1e-3, 200, 1e-6);
    for i in 0..s.len() {
        assert!((m.probabilities(s.row(i)).iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn single_tree_forest_equals_tree() {
    let s = random_samples(8, 200, 5, 3);
    let params = TreeParams::default();
    let tree = DecisionTree::fit(&s, 3, params);
    let forest = RandomForest::fit(
        &s,
        3,
        ForestParams {
            trees: 1,
            bootstrap: false,
            tree: params,
        },
        &mut keyed_rng!(1u64),
    );
    let probe = random_samples(9, 500, 5, 3);
    for i in 0..probe.len() {
        assert_eq!(tree.predict(probe.row(i)), forest.predict(probe.row(i)));
    }
}

#[test]
fn tree_grown_to_purity_fits_training_data() {
    let s = random_samples(4, 300, 3, 4);
    let tree = DecisionTree::fit(&s, 4, TreeParams::default());
    assert!((0..s.len()).all(|i| tree.predict(s.row(i)) == s.y[i]));
}

#[test]
fn probe_matrix_arity() {
    let datasets: Vec<EmbeddingDataset> = (1..=12)
        .map(|layer| {
            let mut ds = gen_embeddings(EmbeddingKind::Blobs, 3, 40, 0.2 * layer as f64, layer as u64).unwrap();
            ds.metadata.model_id = "bert:base".into();
            ds.metadata.probing_task = "Tense".into();
            ds.metadata.layer = layer;
            ds
        })
        .collect();
    let mut opts = BuildOptions::new(3);
    opts.execution = Execution::Serial;
    let pm = build_probe_matrix(&datasets, &opts).unwrap();
    assert_eq!(pm.model_count(), 1);
    assert_eq!(pm.feature_count(), 12 + 84);
    assert_eq!(pm.method_columns(ProbeMethod::BestByDev).len(), 12);
    opts.execution = Execution::Parallel;
    assert_eq!(build_probe_matrix(&datasets, &opts).unwrap(), pm);
    assert!(matches!(build_probe_matrix(&[], &opts), Err(Error::Empty(_))));
}

#[test]
fn subsampling_is_stratified_and_bounded() {
    let ds = gen_embeddings(EmbeddingKind::Blobs, 2, 100, 1.0, 5).unwrap();
    let sub = subsample(&ds, 1, 40).unwrap();
    assert_eq!(sub.train.class_counts(2), vec![28, 28]);
    assert_eq!(sub.dev.class_counts(2), vec![6, 6]);
    assert_eq!(sub.test.class_counts(2), vec![6, 6]);
    // every kept vector comes from the same split of the source
    for (src, dst) in [(&ds.train, &sub.train), (&ds.dev, &sub.dev), (&ds.test, &sub.test)] {
        for i in 0..dst.len() {
            assert!((0..src.len()).any(|j| src.vector(j, 2) == dst.vector(i, 2)));
        }
    }
    assert!(matches!(subsample(&ds, 1, 200), Err(Error::InsufficientSamples { .. })));
}

#[test]
fn fewer_samples_give_noisier_accuracies() {
    let ds = gen_embeddings(EmbeddingKind::Blobs, 4, 2000, 2.0, 6).unwrap();
    let variance = |n: usize| {
        let accs: Vec<f64> = (0..20)
            .map(|seed| {
                let out = run_battery_with(&subsample(&ds, seed, n).unwrap(), seed, &[ProbeMethod::LogReg]).unwrap();
                out.results[0].test_accuracy
            })
            .collect();
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (accs.len() - 1) as f64
    };
    assert!(variance(400) > variance(1200));
}

#[test]
fn fourier_feature_svm_handles_xor() {
    let ds = gen_embeddings(EmbeddingKind::Xor, 2, 300, 8.0, 12).unwrap();
    let train = Samples::from_split(&ds.train, 2);
    let test = Samples::from_split(&ds.test, 2);
    let mut spec = ClassifierSpec::new(ProbeMethod::SVM, 1);
    spec.hyperparameters.rbf_features = Some(200);
    spec.hyperparameters.rbf_gamma = Some(0.5);
    assert!(train_samples(&spec, &train, 2).unwrap().accuracy(&test) >= 0.9);
}
