//! The probing classifier battery.
//!
//! Seven classifiers are trained on the train split of an
//! [`EmbeddingDataset`]; the one with the best dev accuracy supplies the
//! probing result (its test accuracy).

pub mod data;
pub mod logreg;
pub mod mlp;
pub mod optim;
pub mod svm;
pub mod tree;

use std::collections::BTreeSet;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::datamodel::{EmbeddingDataset, FeatureId, ModelId, ProbeMatrix, ProbeMethod, Split, SplitKind};
use crate::error::{Error, Result};
use crate::exec::{try_map_indexed, Execution};
use crate::keyed_rng;
use crate::rng::fisher_yates;
use crate::synth::split_sizes;

pub use data::{softmax, Samples, Standardizer};
pub use logreg::LogReg;
pub use mlp::{Mlp, MlpShape};
pub use svm::Svm;
pub use tree::{DecisionTree, ForestParams, RandomForest, TreeParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// L2 strength: on the mean loss for LogReg/MLP, Pegasos λ for SVM.
    pub l2: f64,
    pub learning_rate: Option<f64>,
    /// Iteration budget for LogReg, epochs for MLP and SVM.
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub gradient_tolerance: Option<f64>,
    pub hidden_units: Option<usize>,
    pub trees: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_leaf: Option<usize>,
    pub bootstrap: Option<bool>,
    pub feature_subsample: Option<bool>,
    /// Random Fourier features for an RBF-kernel SVM; off by default.
    pub rbf_features: Option<usize>,
    pub rbf_gamma: Option<f64>,
}

impl Hyperparameters {
    pub fn default_for(method: ProbeMethod) -> Self {
        let none = Self {
            l2: 0.0,
            learning_rate: None,
            epochs: None,
            batch_size: None,
            gradient_tolerance: None,
            hidden_units: None,
            trees: None,
            max_depth: None,
            min_leaf: None,
            bootstrap: None,
            feature_subsample: None,
            rbf_features: None,
            rbf_gamma: None,
        };
        match method {
            ProbeMethod::LogReg | ProbeMethod::BestByDev => Self {
                l2: 1e-3,
                epochs: Some(200),
                gradient_tolerance: Some(1e-6),
                ..none
            },
            ProbeMethod::MLP10 | ProbeMethod::MLP20 => Self {
                l2: 1e-4,
                learning_rate: Some(1e-3),
                epochs: Some(100),
                batch_size: Some(32),
                hidden_units: Some(if method == ProbeMethod::MLP10 { 10 } else { 20 }),
                ..none
            },
            ProbeMethod::RandomForest10 | ProbeMethod::RandomForest100 => Self {
                trees: Some(if method == ProbeMethod::RandomForest10 { 10 } else { 100 }),
                min_leaf: Some(1),
                bootstrap: Some(true),
                feature_subsample: Some(true),
                ..none
            },
            ProbeMethod::DecisionTree => Self {
                min_leaf: Some(1),
                ..none
            },
            ProbeMethod::SVM => Self {
                l2: 1e-3,
                epochs: Some(200),
                ..none
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub method: ProbeMethod,
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
}

impl ClassifierSpec {
    pub fn new(method: ProbeMethod, seed: u64) -> Self {
        Self {
            method,
            hyperparameters: Hyperparameters::default_for(method),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    LogReg(LogReg),
    Mlp(Mlp),
    Tree(DecisionTree),
    Forest(RandomForest),
    Svm(Svm),
}

impl Classifier {
    pub fn predict(&self, x: &[f64]) -> usize {
        match self {
            Classifier::LogReg(m) => m.predict(x),
            Classifier::Mlp(m) => m.predict(x),
            Classifier::Tree(m) => m.predict(x),
            Classifier::Forest(m) => m.predict(x),
            Classifier::Svm(m) => m.predict(x),
        }
    }

    pub fn accuracy(&self, s: &Samples) -> f64 {
        if s.is_empty() {
            return 0.0;
        }
        let hits = (0..s.len()).filter(|&i| self.predict(s.row(i)) == s.y[i]).count();
        hits as f64 / s.len() as f64
    }
}

/// Trains one classifier on `train`. Deterministic in `(spec, train)`.
pub fn train_samples(spec: &ClassifierSpec, train: &Samples, classes: usize) -> Result<Classifier> {
    if train.distinct_classes() < 2 {
        return Err(Error::DegenerateData("training split contains a single class".into()));
    }
    if train.y.iter().any(|&y| y >= classes) {
        return Err(Error::DegenerateData(format!("label outside 0..{classes}")));
    }
    let h = &spec.hyperparameters;
    let mut rng = keyed_rng!(spec.seed, "classifier", spec.method.name());
    let model = match spec.method {
        ProbeMethod::LogReg | ProbeMethod::BestByDev => Classifier::LogReg(LogReg::fit(
            train,
            classes,
            h.l2,
            h.epochs.unwrap_or(200),
            h.gradient_tolerance.unwrap_or(1e-6),
        )),
        ProbeMethod::MLP10 | ProbeMethod::MLP20 => {
            let cfg = mlp::MlpTraining {
                hidden: h.hidden_units.unwrap_or(10),
                classes,
                alpha: h.l2,
                learning_rate: h.learning_rate.unwrap_or(1e-3),
                epochs: h.epochs.unwrap_or(100),
                batch_size: h.batch_size.unwrap_or(32),
            };
            Classifier::Mlp(Mlp::fit(train, &cfg, &mut rng))
        }
        ProbeMethod::DecisionTree => Classifier::Tree(DecisionTree::fit(train, classes, tree_params(h, train.dim, false))),
        ProbeMethod::RandomForest10 | ProbeMethod::RandomForest100 => {
            let params = ForestParams {
                trees: h.trees.unwrap_or(10),
                bootstrap: h.bootstrap.unwrap_or(true),
                tree: tree_params(h, train.dim, h.feature_subsample.unwrap_or(true)),
            };
            Classifier::Forest(RandomForest::fit(train, classes, params, &mut rng))
        }
        ProbeMethod::SVM => {
            let cfg = svm::SvmTraining {
                classes,
                lambda: h.l2,
                epochs: h.epochs.unwrap_or(200),
                rbf: h.rbf_features.map(|f| (f, h.rbf_gamma.unwrap_or(1.0 / train.dim as f64))),
            };
            Classifier::Svm(Svm::fit(train, &cfg, &mut rng))
        }
    };
    Ok(model)
}

fn tree_params(h: &Hyperparameters, dim: usize, subsample: bool) -> TreeParams {
    TreeParams {
        max_depth: h.max_depth,
        min_leaf: h.min_leaf.unwrap_or(1),
        max_features: subsample.then(|| (dim as f64).sqrt().ceil() as usize),
    }
}

pub fn train_classifier(spec: &ClassifierSpec, data: &EmbeddingDataset) -> Result<Classifier> {
    data.validate()?;
    train_samples(spec, &Samples::from_split(&data.train, data.dim), data.class_count)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: ProbeMethod,
    pub dev_accuracy: f64,
    pub test_accuracy: f64,
    pub hyperparameters: Hyperparameters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub results: Vec<MethodResult>,
    pub best: ProbeMethod,
    pub best_test_accuracy: f64,
}

impl ProbeOutcome {
    pub fn result(&self, method: ProbeMethod) -> Option<&MethodResult> {
        self.results.iter().find(|r| r.method == method)
    }
}

/// Per-job seed for one classifier on one dataset.
pub fn job_seed(seed: u64, model: &str, task: &str, layer: u32, method: ProbeMethod) -> u64 {
    keyed_rng!(seed, "probe", model, task, layer, method.name()).next_u64()
}

/// Picks the best dev accuracy; earlier methods in enum order win ties.
pub fn select_best(results: &[MethodResult]) -> Option<&MethodResult> {
    let mut sorted: Vec<&MethodResult> = results.iter().collect();
    sorted.sort_by_key(|r| r.method);
    let mut best: Option<&MethodResult> = None;
    for r in sorted {
        if best.is_none_or(|b| r.dev_accuracy > b.dev_accuracy) {
            best = Some(r);
        }
    }
    best
}

pub fn run_battery(data: &EmbeddingDataset, seed: u64) -> Result<ProbeOutcome> {
    run_battery_with(data, seed, &ProbeMethod::CLASSIFIERS)
}

/// Trains the listed methods; seeds are keyed by the dataset's metadata.
pub fn run_battery_with(data: &EmbeddingDataset, seed: u64, methods: &[ProbeMethod]) -> Result<ProbeOutcome> {
    data.validate()?;
    let methods: BTreeSet<ProbeMethod> = methods.iter().copied().filter(|m| *m != ProbeMethod::BestByDev).collect();
    if methods.is_empty() {
        return Err(Error::Empty("probe methods"));
    }
    let train = Samples::from_split(&data.train, data.dim);
    let dev = Samples::from_split(&data.dev, data.dim);
    let test = Samples::from_split(&data.test, data.dim);
    let meta = &data.metadata;
    let mut results = Vec::with_capacity(methods.len());
    for method in methods {
        let spec = ClassifierSpec::new(method, job_seed(seed, &meta.model_id, &meta.probing_task, meta.layer, method));
        let model = train_samples(&spec, &train, data.class_count)?;
        results.push(MethodResult {
            method,
            dev_accuracy: model.accuracy(&dev),
            test_accuracy: model.accuracy(&test),
            hyperparameters: spec.hyperparameters,
        });
    }
    let best = select_best(&results).expect("non-empty results");
    Ok(ProbeOutcome {
        best: best.method,
        best_test_accuracy: best.test_accuracy,
        results,
    })
}

/// Stratified seeded subsample of every split to the 70/15/15 share of
/// `samples_per_class`. Rows keep their original relative order, so splits
/// stay disjoint.
pub fn subsample(data: &EmbeddingDataset, seed: u64, samples_per_class: usize) -> Result<EmbeddingDataset> {
    let sizes = split_sizes(samples_per_class);
    let meta = &data.metadata;
    let mut out = data.clone();
    for (kind, needed) in SplitKind::ALL.into_iter().zip(sizes) {
        let split = data.split(kind);
        let mut rng = keyed_rng!(seed, "subsample", &meta.model_id, &meta.probing_task, meta.layer, kind.name());
        let mut keep = Vec::new();
        for class in 0..data.class_count as u32 {
            let mut rows: Vec<usize> = (0..split.len()).filter(|&i| split.labels[i] == class).collect();
            if rows.len() < needed {
                return Err(Error::InsufficientSamples {
                    split: kind.name(),
                    class,
                    needed,
                    available: rows.len(),
                });
            }
            fisher_yates(&mut rows, &mut rng);
            keep.extend_from_slice(&rows[..needed]);
        }
        keep.sort_unstable();
        let sub: Split = split.subset(&keep, data.dim);
        match kind {
            SplitKind::Train => out.train = sub,
            SplitKind::Dev => out.dev = sub,
            SplitKind::Test => out.test = sub,
        }
    }
    out.metadata.samples_per_class = samples_per_class as u64;
    Ok(out)
}

/// Options for [`build_probe_matrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct BuildOptions {
    pub seed: u64,
    /// `None` keeps every sample.
    pub samples_per_class: Option<usize>,
    pub methods: Vec<ProbeMethod>,
    pub execution: Execution,
}

impl BuildOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            samples_per_class: None,
            methods: ProbeMethod::CLASSIFIERS.to_vec(),
            execution: Execution::default(),
        }
    }
}

/// Runs the battery on every dataset and assembles a [`ProbeMatrix`] with a
/// BestByDev column plus one column per method for each (task, layer).
pub fn build_probe_matrix(datasets: &[EmbeddingDataset], opts: &BuildOptions) -> Result<ProbeMatrix> {
    if datasets.is_empty() {
        return Err(Error::Empty("embedding datasets"));
    }
    let mut keys = BTreeSet::new();
    for ds in datasets {
        let m = &ds.metadata;
        if !keys.insert((m.model_id.clone(), m.probing_task.clone(), m.layer)) {
            return Err(Error::DuplicateKey(format!("{} {}_{}", m.model_id, m.probing_task, m.layer)));
        }
    }
    let outcomes = try_map_indexed(opts.execution, datasets.len(), |i| {
        let ds = match opts.samples_per_class {
            Some(n) => subsample(&datasets[i], opts.seed, n)?,
            None => datasets[i].clone(),
        };
        run_battery_with(&ds, opts.seed, &opts.methods)
    })?;

    let models: BTreeSet<String> = datasets.iter().map(|d| d.metadata.model_id.clone()).collect();
    let model_ids: Vec<ModelId> = models.iter().map(|m| m.parse()).collect::<Result<_>>()?;
    let model_row = |name: &str| models.iter().position(|m| m == name).expect("collected above");
    let mut features: BTreeSet<FeatureId> = BTreeSet::new();
    for (ds, outcome) in datasets.iter().zip(&outcomes) {
        let m = &ds.metadata;
        features.insert(FeatureId::best(&m.probing_task, m.layer));
        for r in &outcome.results {
            features.insert(FeatureId::new(&m.probing_task, m.layer, r.method));
        }
    }
    let features: Vec<FeatureId> = features.into_iter().collect();
    let col = |f: &FeatureId| features.binary_search(f).expect("collected above");
    let mut rows = vec![vec![None; features.len()]; models.len()];
    for (ds, outcome) in datasets.iter().zip(&outcomes) {
        let m = &ds.metadata;
        let r = model_row(&m.model_id);
        rows[r][col(&FeatureId::best(&m.probing_task, m.layer))] = Some(outcome.best_test_accuracy);
        for res in &outcome.results {
            rows[r][col(&FeatureId::new(&m.probing_task, m.layer, res.method))] = Some(res.test_accuracy);
        }
    }
    ProbeMatrix::from_cells(model_ids, features, rows)
}
