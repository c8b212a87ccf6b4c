//! Can a handful of probe features identify a model's family?
//!
//! For every k-subset of features, the cross-validated accuracy of a
//! multinomial logistic regression predicting the family is compared with
//! the same classifier on matched Gaussian features. The paired differences
//! feed a one-sample, one-sided t-test.

use std::collections::BTreeMap;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datamodel::{FeatureId, ProbeMatrix, ProbeMethod, StudyConfig};
use crate::error::{Error, Result};
use crate::exec;
use crate::keyed_rng;
use crate::linreg::fold_assignments;
use crate::probekit::{Hyperparameters, LogReg, Samples};
use crate::rng::fisher_yates;
use crate::selection::{binomial, next_combination, unrank_combination};
use crate::special::t_cdf;

const CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetAccuracy {
    pub features: Vec<FeatureId>,
    pub cv_accuracy_probe: f64,
    pub cv_accuracy_random: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerprintReport {
    pub subsets: Vec<SubsetAccuracy>,
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub t_stat: f64,
    /// One-sided: probe features better than random ones.
    pub p_value: f64,
    pub dof: f64,
    /// Number of paired differences entering the test.
    pub samples: usize,
    pub replicates: usize,
    pub max_accuracy: f64,
    pub trivial_baseline: f64,
    pub families: Vec<String>,
    pub folds: usize,
    /// Whether folds were stratified by family or plain seeded folds.
    pub stratified_folds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub mean: f64,
    pub sd: f64,
    pub t_stat: f64,
    pub dof: f64,
    pub p_value: f64,
}

/// One-sample, one-sided (greater) t-test of `values` against 0.
pub fn one_sample_t_test(values: &[f64]) -> Result<TTest> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientDof { models: n, params: 1 });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let dof = (n - 1) as f64;
    let (t_stat, p_value) = if sd > 0.0 {
        let t = mean / (sd / (n as f64).sqrt());
        (t, 1.0 - t_cdf(t, dof)?)
    } else if mean > 0.0 {
        (f64::INFINITY, 0.0)
    } else if mean < 0.0 {
        (f64::NEG_INFINITY, 1.0)
    } else {
        (0.0, 0.5)
    };
    Ok(TTest {
        mean,
        sd,
        t_stat,
        dof,
        p_value,
    })
}

/// Fold per model. Stratified when every family has at least `folds`
/// members: each family is shuffled and dealt round-robin, continuing the
/// deal across families so fold sizes stay balanced.
pub fn family_folds(labels: &[usize], classes: usize, folds: usize, seed: u64) -> Result<(Vec<usize>, bool)> {
    let mut counts = vec![0usize; classes];
    for &l in labels {
        counts[l] += 1;
    }
    if counts.iter().any(|&c| c < folds) {
        return Ok((fold_assignments(labels.len(), folds, seed)?, false));
    }
    if folds < 2 {
        return Err(Error::InvalidArgument(format!("folds must be at least 2, got {folds}")));
    }
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for class in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        fisher_yates(&mut members, &mut keyed_rng!(seed, "family-folds", class));
        for m in members {
            assignment[m] = next % folds;
            next += 1;
        }
    }
    Ok((assignment, true))
}

/// Pooled held-out accuracy of the LogReg probe under a fixed fold assignment.
pub fn cv_accuracy(s: &Samples, classes: usize, assignment: &[usize], folds: usize, h: &Hyperparameters) -> f64 {
    let mut correct = 0usize;
    for fold in 0..folds {
        let train: Vec<usize> = (0..s.len()).filter(|&i| assignment[i] != fold).collect();
        let test: Vec<usize> = (0..s.len()).filter(|&i| assignment[i] == fold).collect();
        if test.is_empty() {
            continue;
        }
        let model = LogReg::fit(&s.rows(&train), classes, h.l2, h.epochs.unwrap_or(200), h.gradient_tolerance.unwrap_or(1e-6));
        correct += test.iter().filter(|&&i| model.predict(s.row(i)) == s.y[i]).count();
    }
    correct as f64 / s.len() as f64
}

/// Runs the test using each model's `family` field as its label.
pub fn fingerprint_study(pm: &ProbeMatrix, k: usize, cfg: &StudyConfig) -> Result<FingerprintReport> {
    fingerprint(pm, &pm.families(), k, cfg)
}

pub fn fingerprint(pm: &ProbeMatrix, families: &[String], k: usize, cfg: &StudyConfig) -> Result<FingerprintReport> {
    let models = pm.model_count();
    if families.len() != models {
        return Err(Error::DimensionMismatch {
            expected: models,
            actual: families.len(),
        });
    }
    let n = pm.feature_count();
    if k == 0 || k > n {
        return Err(Error::KTooLarge { k, n });
    }
    let total = binomial(n, k);
    if total > u128::from(cfg.subset_cap) {
        return Err(Error::CapExceeded {
            subsets: total,
            cap: cfg.subset_cap,
        });
    }
    cfg.validate(models)?;
    let index: BTreeMap<&str, usize> = {
        let mut names: Vec<&str> = families.iter().map(String::as_str).collect();
        names.sort_unstable();
        names.dedup();
        names.into_iter().enumerate().map(|(i, f)| (f, i)).collect()
    };
    let classes = index.len();
    if classes < 2 {
        return Err(Error::DegenerateData("fingerprinting needs at least two families".into()));
    }
    let labels: Vec<usize> = families.iter().map(|f| index[f.as_str()]).collect();
    let mut counts = vec![0usize; classes];
    for &l in &labels {
        counts[l] += 1;
    }
    let trivial_baseline = *counts.iter().max().expect("classes >= 2") as f64 / models as f64;
    let (assignment, stratified) = family_folds(&labels, classes, cfg.folds, cfg.seed)?;
    let hyper = Hyperparameters::default_for(ProbeMethod::LogReg);
    let x = pm.values();

    let total = total as usize;
    let chunks = total.div_ceil(CHUNK);
    let per_chunk = exec::map_indexed(cfg.execution, chunks, |c| {
        let start = c * CHUNK;
        let len = CHUNK.min(total - start);
        let mut comb = unrank_combination(start as u128, n, k);
        let mut out = Vec::with_capacity(len);
        for step in 0..len {
            if step > 0 {
                next_combination(&mut comb, n);
            }
            let probe: Vec<f64> = (0..models).flat_map(|i| comb.iter().map(move |&j| x.get(i, j))).collect();
            let probe = Samples::new(k, probe, labels.clone());
            let mut rng = keyed_rng!(cfg.seed, "fingerprint-random", k, (start + step) as u64);
            let random: Vec<f64> = (0..models * k).map(|_| StandardNormal.sample(&mut rng)).collect();
            let random = Samples::new(k, random, labels.clone());
            out.push((
                comb.clone(),
                cv_accuracy(&probe, classes, &assignment, cfg.folds, &hyper),
                cv_accuracy(&random, classes, &assignment, cfg.folds, &hyper),
            ));
        }
        out
    });

    let subsets: Vec<SubsetAccuracy> = per_chunk
        .into_iter()
        .flatten()
        .map(|(comb, p, r)| SubsetAccuracy {
            features: comb.iter().map(|&j| pm.features()[j].clone()).collect(),
            cv_accuracy_probe: p,
            cv_accuracy_random: r,
        })
        .collect();
    let diffs: Vec<f64> = subsets.iter().map(|s| s.cv_accuracy_probe - s.cv_accuracy_random).collect();
    let test = one_sample_t_test(&diffs)?;
    let max_accuracy = subsets.iter().map(|s| s.cv_accuracy_probe).fold(0.0, f64::max);
    Ok(FingerprintReport {
        samples: diffs.len(),
        subsets,
        mean_diff: test.mean,
        sd_diff: test.sd,
        t_stat: test.t_stat,
        p_value: test.p_value,
        dof: test.dof,
        replicates: 1,
        max_accuracy,
        trivial_baseline,
        families: index.keys().map(|s| s.to_string()).collect(),
        folds: cfg.folds,
        stratified_folds: stratified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_test_edges() {
        let t = one_sample_t_test(&[1.0, 2.0, 3.0]).unwrap();
        assert!((t.mean - 2.0).abs() < 1e-15 && (t.sd - 1.0).abs() < 1e-15);
        assert!((t.t_stat - 2.0 * 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(t.dof, 2.0);
        assert_eq!(one_sample_t_test(&[0.0, 0.0]).unwrap().p_value, 0.5);
        assert!(one_sample_t_test(&[1.0]).is_err());
    }

    #[test]
    fn stratified_folds_balance_families() {
        let labels: Vec<usize> = (0..25).map(|i| i % 5).collect();
        let (a, stratified) = family_folds(&labels, 5, 5, 1).unwrap();
        assert!(stratified);
        for fold in 0..5 {
            for class in 0..5 {
                assert_eq!((0..25).filter(|&i| a[i] == fold && labels[i] == class).count(), 1);
            }
        }
        let labels: Vec<usize> = (0..10).map(|i| usize::from(i == 0)).collect();
        assert!(!family_folds(&labels, 2, 5, 1).unwrap().1);
    }
}
