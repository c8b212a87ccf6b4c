//! Least-squares prediction of fine-tuning scores, cross-validated RMSE and
//! the random-feature control baseline.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datamodel::{FeatureId, StudyConfig};
use crate::error::{Error, Result};
use crate::exec;
use crate::keyed_rng;
use crate::linalg::{dot, lstsq_min_norm, Matrix};
use crate::rng::fisher_yates;

/// Control RMSEs at or below this fraction of the target's RMS are treated as zero.
pub const DEGENERATE_RELATIVE_RMSE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Feature weights followed by the bias weight (length N + 1).
    pub theta: Vec<f64>,
    pub training_rmse: f64,
    /// Numerical rank of the bias-augmented design.
    pub rank: usize,
}

impl FitResult {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let n = self.theta.len() - 1;
        dot(&self.theta[..n], row) + self.theta[n]
    }
}

fn check_finite(x: &Matrix, y: &[f64]) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::NonFinite("feature matrix"));
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("target vector"));
    }
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            actual: y.len(),
        });
    }
    Ok(())
}

/// Ordinary least squares on `[x | 1]`, minimum-norm when rank deficient.
pub fn fit_ols(x: &Matrix, y: &[f64]) -> Result<FitResult> {
    check_finite(x, y)?;
    if x.rows() == 0 {
        return Err(Error::Empty("design matrix has no rows"));
    }
    let (theta, rank) = lstsq_min_norm(&x.with_bias(), y);
    let mut fit = FitResult {
        theta,
        training_rmse: 0.0,
        rank,
    };
    fit.training_rmse = rmse_unchecked(&fit, x, y);
    Ok(fit)
}

fn rmse_unchecked(fit: &FitResult, x: &Matrix, y: &[f64]) -> f64 {
    let sse: f64 = (0..x.rows())
        .map(|i| {
            let r = fit.predict(x.row(i)) - y[i];
            r * r
        })
        .sum();
    (sse / x.rows() as f64).sqrt()
}

pub fn rmse(fit: &FitResult, x: &Matrix, y: &[f64]) -> Result<f64> {
    if x.cols() + 1 != fit.theta.len() {
        return Err(Error::DimensionMismatch {
            expected: fit.theta.len() - 1,
            actual: x.cols(),
        });
    }
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            actual: y.len(),
        });
    }
    if x.rows() == 0 {
        return Err(Error::Empty("no rows to evaluate"));
    }
    Ok(rmse_unchecked(fit, x, y))
}

/// Fold index for each of `models` rows: a seeded Fisher–Yates shuffle,
/// chunked contiguously with the remainder spread over the first folds.
pub fn fold_assignments(models: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidArgument(format!("folds must be at least 2, got {folds}")));
    }
    if folds > models {
        return Err(Error::TooFewModels { folds, models });
    }
    let mut order: Vec<usize> = (0..models).collect();
    fisher_yates(&mut order, &mut keyed_rng!(seed, "folds", models));
    let (base, extra) = (models / folds, models % folds);
    let mut assignment = vec![0; models];
    let mut start = 0;
    for fold in 0..folds {
        let size = base + usize::from(fold < extra);
        for &row in &order[start..start + size] {
            assignment[row] = fold;
        }
        start += size;
    }
    Ok(assignment)
}

/// Pooled held-out RMSE for a fixed fold assignment.
pub fn cv_rmse_with_folds(x: &Matrix, y: &[f64], assignment: &[usize]) -> Result<f64> {
    check_finite(x, y)?;
    if assignment.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            actual: assignment.len(),
        });
    }
    let folds = assignment.iter().max().map_or(0, |m| m + 1);
    let mut sse = 0.0;
    for fold in 0..folds {
        let (train, test): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| assignment[i] != fold);
        if test.is_empty() {
            continue;
        }
        if train.is_empty() {
            return Err(Error::TooFewModels {
                folds,
                models: y.len(),
            });
        }
        let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let fit = fit_ols(&x.select_rows(&train), &ty)?;
        for &i in &test {
            let r = fit.predict(x.row(i)) - y[i];
            sse += r * r;
        }
    }
    Ok((sse / y.len() as f64).sqrt())
}

/// Cross-validated RMSE under the study's seeded fold protocol.
pub fn cv_rmse(x: &Matrix, y: &[f64], cfg: &StudyConfig) -> Result<(f64, Vec<usize>)> {
    let assignment = fold_assignments(y.len(), cfg.folds, cfg.seed)?;
    let value = cv_rmse_with_folds(x, y, &assignment)?;
    Ok((value, assignment))
}

/// Standard-normal control draws for one key. Columns are features.
pub fn control_draws_standard(models: usize, n_features: usize, seed: u64, task: &str, draw_index: u64) -> Matrix {
    let mut rng = keyed_rng!(seed, "control", task, n_features, draw_index);
    let data = (0..models * n_features).map(|_| StandardNormal.sample(&mut rng)).collect();
    Matrix::from_row_major(models, n_features, data)
}

/// Control features with variance `cfg.control_sigma_sq`.
pub fn control_features(models: usize, n_features: usize, cfg: &StudyConfig, task: &str, draw_index: u64) -> Matrix {
    let sd = cfg.control_sigma_sq.sqrt();
    let z = control_draws_standard(models, n_features, cfg.seed, task, draw_index);
    Matrix::from_fn(models, n_features, |i, j| sd * z.get(i, j))
}

/// Cross-validated RMSE of the random-feature control for one draw.
///
/// The least-squares predictions are invariant to the scale of the features,
/// so the fit runs on the shared standard-normal draws; the configured
/// variance only affects [`control_features`].
pub fn control_rmse(y: &[f64], n_features: usize, cfg: &StudyConfig, task: &str, draw_index: u64) -> Result<f64> {
    if n_features == 0 {
        return Err(Error::InvalidArgument("control needs at least one feature".into()));
    }
    let z = control_draws_standard(y.len(), n_features, cfg.seed, task, draw_index);
    Ok(cv_rmse(&z, y, cfg)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlStats {
    pub mean: f64,
    /// Sample standard deviation (divisor `draws - 1`); zero for a single draw.
    pub std: f64,
    pub draws: usize,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Control RMSE for draw indices `1..=draws`, in draw order.
pub fn control_rmse_draws(y: &[f64], n_features: usize, cfg: &StudyConfig, task: &str, draws: usize) -> Result<Vec<f64>> {
    cfg.validate(y.len())?;
    exec::try_map_indexed(cfg.execution, draws, |i| control_rmse(y, n_features, cfg, task, i as u64 + 1))
}

pub fn control_stats(y: &[f64], n_features: usize, cfg: &StudyConfig, task: &str) -> Result<ControlStats> {
    let draws = if cfg.single_draw { 1 } else { cfg.control_draws };
    let values = control_rmse_draws(y, n_features, cfg, task, draws)?;
    let (mean, std) = mean_std(&values);
    Ok(ControlStats { mean, std, draws })
}

/// `(control − cv) / control × 100`.
pub fn rmse_reduction(rmse_cv: f64, rmse_control: f64) -> Result<f64> {
    if !(rmse_control > 0.0) || !rmse_control.is_finite() {
        return Err(Error::DegenerateControl);
    }
    Ok((rmse_control - rmse_cv) / rmse_control * 100.0)
}

fn target_rms(y: &[f64]) -> f64 {
    (y.iter().map(|v| v * v).sum::<f64>() / y.len().max(1) as f64).sqrt()
}

fn is_degenerate(rmse_control: f64, y: &[f64]) -> bool {
    rmse_control <= DEGENERATE_RELATIVE_RMSE * target_rms(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Uncertainty {
    pub mean: f64,
    pub std: f64,
    /// `std / mean` in percent.
    pub ratio: f64,
    pub draws: usize,
}

/// Spread of the control RMSE across `cfg.control_draws` draws.
pub fn mc_uncertainty(y: &[f64], n_features: usize, cfg: &StudyConfig, task: &str) -> Result<Uncertainty> {
    if cfg.control_draws < 2 {
        return Err(Error::InvalidArgument("need at least two control draws".into()));
    }
    let values = control_rmse_draws(y, n_features, cfg, task, cfg.control_draws)?;
    let (mean, std) = mean_std(&values);
    if is_degenerate(mean, y) {
        return Err(Error::DegenerateControl);
    }
    Ok(Uncertainty {
        mean,
        std,
        ratio: std / mean * 100.0,
        draws: values.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub task: String,
    pub feature_ids: Vec<FeatureId>,
    pub rmse_cv: f64,
    pub rmse_control: f64,
    pub rmse_reduction: f64,
    pub training_rmse: f64,
    pub fold_assignments: Vec<usize>,
    pub control_draw_stats: ControlStats,
}

impl RegressionReport {
    /// The reduction recomputed from the stored RMSE fields.
    pub fn recomputed_reduction(&self) -> Result<f64> {
        rmse_reduction(self.rmse_cv, self.rmse_control)
    }
}

/// Fits, cross-validates and scores one feature set against its control.
pub fn regress(x: &Matrix, y: &[f64], feature_ids: Vec<FeatureId>, task: &str, cfg: &StudyConfig) -> Result<RegressionReport> {
    if feature_ids.len() != x.cols() {
        return Err(Error::DimensionMismatch {
            expected: x.cols(),
            actual: feature_ids.len(),
        });
    }
    cfg.validate(y.len())?;
    let training_rmse = fit_ols(x, y)?.training_rmse;
    let (rmse_cv, fold_assignments) = cv_rmse(x, y, cfg)?;
    let stats = control_stats(y, x.cols().max(1), cfg, task)?;
    if is_degenerate(stats.mean, y) {
        return Err(Error::DegenerateControl);
    }
    let rmse_reduction = rmse_reduction(rmse_cv, stats.mean)?;
    Ok(RegressionReport {
        task: task.to_string(),
        feature_ids,
        rmse_cv,
        rmse_control: stats.mean,
        rmse_reduction,
        training_rmse,
        fold_assignments,
        control_draw_stats: stats,
    })
}
