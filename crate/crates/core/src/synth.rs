//! Synthetic studies with known answers, and an independent least-squares
//! solver for cross-checking.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datamodel::{
    EmbeddingDataset, EmbeddingMetadata, FeatureId, ModelId, ProbeMatrix, ScoreTable, Split, DEFAULT_LAYER_COUNT,
    GLUE_TASKS, STANDARD_PROBING_TASKS,
};
use crate::error::{Error, Result};
use crate::keyed_rng;
use crate::linalg::{dot, norm2, Matrix};
use crate::rng::fisher_yates;

pub const SCORE_LOW: f64 = 0.55;
pub const SCORE_HIGH: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedParams {
    pub models: usize,
    pub features: usize,
    pub k_true: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    pub tasks: Vec<String>,
    pub families: usize,
}

impl PlantedParams {
    pub fn new(models: usize, features: usize, k_true: usize, noise_sigma: f64, seed: u64) -> Self {
        Self {
            models,
            features,
            k_true,
            noise_sigma,
            seed,
            tasks: GLUE_TASKS.iter().map(|s| s.to_string()).collect(),
            families: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedStudy {
    pub pm: ProbeMatrix,
    pub st: ScoreTable,
    /// Per task: the features that generate its scores, canonical order.
    pub true_support: BTreeMap<String, Vec<FeatureId>>,
    /// Per task: weights aligned with `true_support`, then the bias.
    pub true_theta: BTreeMap<String, Vec<f64>>,
    pub noise_sigma: f64,
    /// Scores clipped into [0, 1] after noise.
    pub clipped: usize,
}

/// Feature `i` of a synthetic study: standard probing tasks, 12 layers each.
pub fn synthetic_feature(i: usize) -> FeatureId {
    let layers = DEFAULT_LAYER_COUNT as usize;
    let task = match STANDARD_PROBING_TASKS.get(i / layers) {
        Some(t) => t.to_string(),
        None => format!("Synthetic{:02}", i / layers),
    };
    FeatureId::best(task, (i % layers) as u32 + 1)
}

pub fn synthetic_models(count: usize, families: usize) -> Vec<ModelId> {
    (0..count)
        .map(|k| ModelId::new(format!("model{:02}", k + 1), "", format!("family{}", k % families.max(1) + 1)))
        .collect()
}

pub fn gen_planted_study(models: usize, features: usize, k_true: usize, noise_sigma: f64, seed: u64) -> Result<PlantedStudy> {
    gen_planted_study_with(&PlantedParams::new(models, features, k_true, noise_sigma, seed))
}

/// Probe accuracies uniform in [0.5, 1); each task's scores are a linear
/// function of a random `k_true`-subset, rescaled into [0.55, 0.95], plus
/// Gaussian noise.
pub fn gen_planted_study_with(p: &PlantedParams) -> Result<PlantedStudy> {
    if p.models < 5 {
        return Err(Error::InvalidArgument(format!("need at least 5 models, got {}", p.models)));
    }
    if p.features == 0 || p.k_true == 0 || p.k_true > p.features {
        return Err(Error::KTooLarge { k: p.k_true, n: p.features });
    }
    if !(p.noise_sigma >= 0.0) || !p.noise_sigma.is_finite() {
        return Err(Error::InvalidArgument("noise_sigma must be non-negative".into()));
    }
    let features: Vec<FeatureId> = (0..p.features).map(synthetic_feature).collect();
    let model_ids = synthetic_models(p.models, p.families);

    let mut rng = keyed_rng!(p.seed, "planted", "probes");
    let x = Matrix::from_fn(p.models, p.features, |_, _| rng.random_range(0.5..1.0));
    let pm = ProbeMatrix::new(model_ids.clone(), features, (0..p.models).map(|i| x.row(i).to_vec()).collect())?;
    // canonical order may differ from generation order; regenerate x from pm
    let x = pm.values().clone();

    let mut scores = Matrix::zeros(p.models, p.tasks.len());
    let mut true_support = BTreeMap::new();
    let mut true_theta = BTreeMap::new();
    let mut clipped = 0;
    for (t, task) in p.tasks.iter().enumerate() {
        let mut rng = keyed_rng!(p.seed, "planted", "task", task);
        let mut idx: Vec<usize> = (0..p.features).collect();
        fisher_yates(&mut idx, &mut rng);
        let mut support = idx[..p.k_true].to_vec();
        support.sort_unstable();
        let weights: Vec<f64> = support
            .iter()
            .map(|_| {
                let magnitude = rng.random_range(0.5..1.5);
                if rng.random_bool(0.5) {
                    magnitude
                } else {
                    -magnitude
                }
            })
            .collect();
        let raw: Vec<f64> = (0..p.models)
            .map(|i| support.iter().zip(&weights).map(|(&j, w)| x.get(i, j) * w).sum())
            .collect();
        let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (scale, offset) = if hi > lo {
            let s = (SCORE_HIGH - SCORE_LOW) / (hi - lo);
            (s, SCORE_LOW - lo * s)
        } else {
            (0.0, (SCORE_LOW + SCORE_HIGH) / 2.0)
        };
        let noise = Normal::new(0.0, p.noise_sigma).expect("validated sigma");
        for (i, r) in raw.iter().enumerate() {
            let mut v = r * scale + offset;
            if p.noise_sigma > 0.0 {
                v += noise.sample(&mut rng);
            }
            if !(0.0..=1.0).contains(&v) {
                clipped += 1;
                v = v.clamp(0.0, 1.0);
            }
            scores.set(i, t, v);
        }
        let mut theta: Vec<f64> = weights.iter().map(|w| w * scale).collect();
        theta.push(offset);
        true_support.insert(task.clone(), support.iter().map(|&j| pm.features()[j].clone()).collect());
        true_theta.insert(task.clone(), theta);
    }
    let st = ScoreTable::new(
        pm.models().to_vec(),
        p.tasks.clone(),
        (0..p.models).map(|i| scores.row(i).to_vec()).collect(),
    )?;
    Ok(PlantedStudy {
        pm,
        st,
        true_support,
        true_theta,
        noise_sigma: p.noise_sigma,
        clipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmbeddingKind {
    /// Two unit-variance Gaussians at ±separation/2 along a random direction.
    Blobs,
    /// Four clusters at (±separation/2, ±separation/2) in the first two
    /// coordinates; the label is the XOR of the two signs.
    Xor,
    /// Both classes drawn from the same standard Gaussian.
    Null,
}

impl std::str::FromStr for EmbeddingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "blobs" => Ok(EmbeddingKind::Blobs),
            "xor" => Ok(EmbeddingKind::Xor),
            "null" => Ok(EmbeddingKind::Null),
            _ => Err(Error::InvalidArgument(format!("unknown embedding kind `{s}`"))),
        }
    }
}

/// Per-class split sizes for a 70/15/15 train/dev/test split.
pub fn split_sizes(n_per_class: usize) -> [usize; 3] {
    let train = n_per_class * 70 / 100;
    let dev = n_per_class * 15 / 100;
    [train, dev, n_per_class - train - dev]
}

/// Two-class dataset of the given kind, deterministic in `seed`.
pub fn gen_embeddings(kind: EmbeddingKind, dim: usize, n_per_class: usize, separation: f64, seed: u64) -> Result<EmbeddingDataset> {
    if dim == 0 || (kind == EmbeddingKind::Xor && dim < 2) {
        return Err(Error::InvalidArgument(format!("dimension {dim} too small for {kind:?}")));
    }
    let mut rng = keyed_rng!(seed, "embeddings");
    let direction: Vec<f64> = {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = norm2(&v);
        v.into_iter().map(|x| x / n).collect()
    };
    let half = separation / 2.0;
    let draw = |label: u32, index: usize, rng: &mut crate::rng::StreamRng| -> Vec<f32> {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        match kind {
            EmbeddingKind::Blobs => {
                let sign = if label == 1 { 1.0 } else { -1.0 };
                for (x, d) in v.iter_mut().zip(&direction) {
                    *x += sign * half * d;
                }
            }
            EmbeddingKind::Xor => {
                // label 0: same signs, label 1: opposite signs; alternate the two clusters
                let first = if index % 2 == 0 { 1.0 } else { -1.0 };
                let second = if label == 0 { first } else { -first };
                v[0] += first * half;
                v[1] += second * half;
            }
            EmbeddingKind::Null => {}
        }
        v.into_iter().map(|x| x as f32).collect()
    };
    let sizes = split_sizes(n_per_class);
    let mut splits: [Split; 3] = Default::default();
    let mut counter = [0usize; 2];
    for (s, &size) in sizes.iter().enumerate() {
        for _ in 0..size {
            for label in 0..2u32 {
                let idx = counter[label as usize];
                counter[label as usize] += 1;
                let v = draw(label, idx, &mut rng);
                splits[s].push(&v, label);
            }
        }
    }
    let [train, dev, test] = splits;
    let kind_name = format!("{kind:?}").to_lowercase();
    Ok(EmbeddingDataset {
        dim,
        class_count: 2,
        train,
        dev,
        test,
        metadata: EmbeddingMetadata {
            probing_task: format!("synthetic-{kind_name}"),
            layer: 1,
            model_id: "synthetic".into(),
            samples_per_class: n_per_class as u64,
        },
    })
}

/// Parameters for a grid of synthetic embedding datasets keyed by
/// (model, probing task, layer).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingGrid {
    pub kind: EmbeddingKind,
    pub models: usize,
    pub probing_tasks: usize,
    pub layers: u32,
    pub dim: usize,
    pub n_per_class: usize,
    pub separation: f64,
    pub seed: u64,
}

/// One dataset per grid cell; the separation is scaled per cell by a keyed
/// factor in [0.5, 1.5) so accuracies vary across models and layers.
pub fn gen_embedding_grid(g: &EmbeddingGrid) -> Result<Vec<EmbeddingDataset>> {
    let models = synthetic_models(g.models, 5);
    let mut out = Vec::new();
    for m in &models {
        let model = m.to_string();
        for t in 0..g.probing_tasks {
            let task = synthetic_feature(t * DEFAULT_LAYER_COUNT as usize).probing_task;
            for layer in 1..=g.layers {
                let mut rng = keyed_rng!(g.seed, "grid", &model, &task, layer);
                let factor: f64 = rng.random_range(0.5..1.5);
                let cell_seed: u64 = rng.random();
                let mut ds = gen_embeddings(g.kind, g.dim, g.n_per_class, g.separation * factor, cell_seed)?;
                ds.metadata = EmbeddingMetadata {
                    probing_task: task.clone(),
                    layer,
                    model_id: model.clone(),
                    samples_per_class: g.n_per_class as u64,
                };
                out.push(ds);
            }
        }
    }
    Ok(out)
}

pub const ORACLE_MAX_ITER: usize = 5_000_000;

/// Least squares on `[x | 1]` by plain gradient descent from zero, stopping
/// when the gradient norm falls below `1e-12` relative to `‖[x | 1]ᵀ y‖`.
///
/// Shares no code with the factorisation-based solver; from a zero start it
/// converges to the minimum-norm solution.
pub fn oracle_ols(x: &Matrix, y: &[f64]) -> Result<Vec<f64>> {
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            actual: y.len(),
        });
    }
    let a = x.with_bias();
    let p = a.cols();
    // largest eigenvalue of AᵀA by power iteration
    let mut v = vec![1.0 / (p as f64).sqrt(); p];
    let mut lambda = 0.0;
    for _ in 0..1000 {
        let w = a.tr_mul_vec(&a.mul_vec(&v));
        let n = norm2(&w);
        if n == 0.0 {
            break;
        }
        let next = n;
        v = w.into_iter().map(|c| c / n).collect();
        if (next - lambda).abs() <= 1e-14 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    let aty = a.tr_mul_vec(y);
    let scale = norm2(&aty).max(f64::MIN_POSITIVE);
    let mut theta = vec![0.0; p];
    if lambda == 0.0 {
        return Ok(theta);
    }
    let step = 1.0 / (lambda * 1.01);
    for _ in 0..ORACLE_MAX_ITER {
        let residual: Vec<f64> = a.mul_vec(&theta).iter().zip(y).map(|(p, t)| p - t).collect();
        let grad = a.tr_mul_vec(&residual);
        if dot(&grad, &grad).sqrt() <= 1e-12 * scale {
            return Ok(theta);
        }
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= step * g;
        }
    }
    Err(Error::NonConvergence(ORACLE_MAX_ITER))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{probe_matrix_from_csv, probe_matrix_to_csv};

    #[test]
    fn planted_study_is_valid_and_deterministic() {
        let a = gen_planted_study(25, 84, 3, 0.005, 7).unwrap();
        let b = gen_planted_study(25, 84, 3, 0.005, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.pm.feature_count(), 84);
        assert_eq!(a.st.tasks().len(), 6);
        for s in a.true_support.values() {
            assert_eq!(s.len(), 3);
        }
        // passes datamodel validation unchanged
        let again = probe_matrix_from_csv(&probe_matrix_to_csv(&a.pm)).unwrap();
        assert_eq!(again, a.pm);
    }

    #[test]
    fn noiseless_scores_follow_theta() {
        let s = gen_planted_study(10, 12, 2, 0.0, 3).unwrap();
        for (t, task) in s.st.tasks().iter().enumerate() {
            let theta = &s.true_theta[task];
            let cols: Vec<usize> = s.true_support[task].iter().map(|f| s.pm.feature_index(f).unwrap()).collect();
            for i in 0..10 {
                let pred: f64 = cols.iter().zip(theta).map(|(&j, w)| s.pm.values().get(i, j) * w).sum::<f64>() + theta[2];
                assert!((pred - s.st.values().get(i, t)).abs() < 1e-12);
            }
            let col = s.st.values().column(t);
            let lo = col.iter().copied().fold(1.0, f64::min);
            let hi = col.iter().copied().fold(0.0, f64::max);
            assert!((lo - SCORE_LOW).abs() < 1e-12 && (hi - SCORE_HIGH).abs() < 1e-12);
        }
        assert_eq!(s.clipped, 0);
    }

    #[test]
    fn smallest_study() {
        let s = gen_planted_study(5, 1, 1, 0.0, 0).unwrap();
        assert_eq!(s.pm.model_count(), 5);
        assert!(gen_planted_study(4, 1, 1, 0.0, 0).is_err());
        assert!(gen_planted_study(5, 2, 3, 0.0, 0).is_err());
    }

    #[test]
    fn embedding_split_sizes() {
        let ds = gen_embeddings(EmbeddingKind::Blobs, 4, 1000, 4.0, 1).unwrap();
        assert_eq!((ds.train.len(), ds.dev.len(), ds.test.len()), (1400, 300, 300));
        assert_eq!(ds.train.class_counts(2), vec![700, 700]);
        ds.validate().unwrap();
        assert!(gen_embeddings(EmbeddingKind::Xor, 1, 10, 4.0, 1).is_err());
    }

    #[test]
    fn oracle_simple_cases() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]);
        let theta = oracle_ols(&x, &[1.0, 3.0, 5.0, 7.0]).unwrap();
        assert!((theta[0] - 2.0).abs() < 1e-9 && (theta[1] - 1.0).abs() < 1e-9);
        let theta = oracle_ols(&x, &[0.4; 4]).unwrap();
        assert!(theta[0].abs() < 1e-9 && (theta[1] - 0.4).abs() < 1e-9);
    }
}
