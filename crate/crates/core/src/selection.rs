//! Feature-set construction: all layers of one probing task, one layer per
//! probing task, and exhaustive best-k subset search.

use serde::{Deserialize, Serialize};

use crate::anova::LayerSignificance;
use crate::datamodel::{join, FeatureId, ProbeMatrix, ProbeMethod, ScoreTable, StudyConfig};
use crate::error::{Error, Result};
use crate::exec;
use crate::linalg::{cholesky_solve, Matrix};
use crate::linreg::{self, fold_assignments, regress, RegressionReport};

/// Cholesky pivots below this fraction of the largest diagonal send a subset
/// to the rank-revealing solver instead.
const GRAM_PIVOT_TOL: f64 = 1e-8;
const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    AllLayersOneTask,
    OneLayerPerTask,
    BestK,
}

/// What an exhaustive search minimises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Objective {
    /// Pooled held-out RMSE under the study's folds.
    #[default]
    HeldOut,
    /// In-sample RMSE; for sensitivity studies only.
    Training,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub task: String,
    pub strategy: Strategy,
    pub chosen: Vec<FeatureId>,
    pub report: RegressionReport,
    pub subsets_evaluated: u64,
    pub notes: Vec<String>,
}

/// Regression on the layers of one probing task under one probe method.
pub fn all_layers_one_task(
    pm: &ProbeMatrix,
    st: &ScoreTable,
    probing_task: &str,
    fine_task: &str,
    method: ProbeMethod,
    cfg: &StudyConfig,
) -> Result<SelectionResult> {
    let cols = pm.task_columns(probing_task, method);
    if cols.is_empty() {
        return Err(Error::UnknownTask(probing_task.to_string()));
    }
    evaluate_columns(pm, st, fine_task, &cols, Strategy::AllLayersOneTask, cfg)
}

fn evaluate_columns(
    pm: &ProbeMatrix,
    st: &ScoreTable,
    fine_task: &str,
    cols: &[usize],
    strategy: Strategy,
    cfg: &StudyConfig,
) -> Result<SelectionResult> {
    let (x, y) = join(pm, st, fine_task)?;
    let chosen: Vec<FeatureId> = cols.iter().map(|&j| pm.features()[j].clone()).collect();
    let report = regress(&x.select_columns(cols), &y, chosen.clone(), fine_task, cfg)?;
    Ok(SelectionResult {
        task: fine_task.to_string(),
        strategy,
        chosen,
        report,
        subsets_evaluated: 1,
        notes: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerChoice {
    pub probing_task: String,
    pub layer: u32,
    /// Number of fine-tuning tasks in which the layer is significant.
    pub significant_in: usize,
    /// True when no layer was significant and the smallest p-value decided.
    pub fallback: bool,
}

/// For each probing task, the layer significant in the most fine-tuning
/// tasks; ties go to the lowest layer. Tasks without any significant layer
/// take the layer with the smallest p-value across fine-tuning tasks.
pub fn choose_layers(sig: &LayerSignificance) -> Vec<LayerChoice> {
    sig.probing_tasks
        .iter()
        .enumerate()
        .filter_map(|(p, task)| {
            let mut counts: std::collections::BTreeMap<u32, usize> = sig.min_p[p].keys().map(|&l| (l, 0)).collect();
            for cell in &sig.layers[p] {
                for &l in cell {
                    *counts.entry(l).or_default() += 1;
                }
            }
            let best = counts.iter().fold(None, |acc: Option<(u32, usize)>, (&l, &c)| match acc {
                Some((_, bc)) if bc >= c => acc,
                _ => Some((l, c)),
            });
            match best {
                Some((layer, c)) if c > 0 => Some(LayerChoice {
                    probing_task: task.clone(),
                    layer,
                    significant_in: c,
                    fallback: false,
                }),
                _ => {
                    let (layer, _) = sig.min_p[p].iter().fold(None, |acc: Option<(u32, f64)>, (&l, &pv)| match acc {
                        Some((_, bp)) if bp <= pv => acc,
                        _ => Some((l, pv)),
                    })?;
                    Some(LayerChoice {
                        probing_task: task.clone(),
                        layer,
                        significant_in: 0,
                        fallback: true,
                    })
                }
            }
        })
        .collect()
}

/// Regression on one ANOVA-chosen layer per probing task.
///
/// The layer choice sees every model, including those later held out, and
/// the result carries a note saying so.
pub fn one_layer_per_task(
    sig: &LayerSignificance,
    pm: &ProbeMatrix,
    st: &ScoreTable,
    fine_task: &str,
    method: ProbeMethod,
    cfg: &StudyConfig,
) -> Result<SelectionResult> {
    let choices = choose_layers(sig);
    if choices.is_empty() {
        return Err(Error::Empty("no probing tasks in the ANOVA tables"));
    }
    let mut cols = Vec::with_capacity(choices.len());
    for c in &choices {
        let id = FeatureId::new(c.probing_task.clone(), c.layer, method);
        cols.push(pm.feature_index(&id).ok_or_else(|| Error::UnknownTask(id.to_string()))?);
    }
    let mut result = evaluate_columns(pm, st, fine_task, &cols, Strategy::OneLayerPerTask, cfg)?;
    result
        .notes
        .push("layers were chosen by ANOVA over all models, so held-out folds informed the feature choice".into());
    for c in choices.iter().filter(|c| c.fallback) {
        result.notes.push(format!(
            "{}: no significant layer at alpha={}; took layer {} with the smallest p-value",
            c.probing_task, sig.alpha, c.layer
        ));
    }
    Ok(result)
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// The `rank`-th k-combination of `0..n` in lexicographic order.
pub fn unrank_combination(mut rank: u128, n: usize, k: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let mut c = 0;
    for i in 0..k {
        loop {
            let count = binomial(n - c - 1, k - i - 1);
            if rank < count {
                break;
            }
            rank -= count;
            c += 1;
        }
        out.push(c);
        c += 1;
    }
    out
}

/// Advances to the next k-combination in lexicographic order.
pub fn next_combination(comb: &mut [usize], n: usize) -> bool {
    let k = comb.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if comb[i] < n - k + i {
            comb[i] += 1;
            for j in i + 1..k {
                comb[j] = comb[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

struct FoldGram {
    gram: Vec<f64>,
    xty: Vec<f64>,
    xmean: Vec<f64>,
    ymean: f64,
    test_rows: Vec<usize>,
}

fn centered_gram(x: &Matrix, y: &[f64], rows: &[usize]) -> FoldGram {
    let n = x.cols();
    let m = rows.len() as f64;
    let mut xmean = vec![0.0; n];
    let mut ymean = 0.0;
    for &r in rows {
        for (acc, v) in xmean.iter_mut().zip(x.row(r)) {
            *acc += v;
        }
        ymean += y[r];
    }
    xmean.iter_mut().for_each(|v| *v /= m);
    ymean /= m;
    let mut gram = vec![0.0; n * n];
    let mut xty = vec![0.0; n];
    let mut centered = vec![0.0; n];
    for &r in rows {
        for (c, (v, mu)) in centered.iter_mut().zip(x.row(r).iter().zip(&xmean)) {
            *c = v - mu;
        }
        let yc = y[r] - ymean;
        for a in 0..n {
            xty[a] += centered[a] * yc;
            for b in a..n {
                gram[a * n + b] += centered[a] * centered[b];
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            gram[a * n + b] = gram[b * n + a];
        }
    }
    FoldGram {
        gram,
        xty,
        xmean,
        ymean,
        test_rows: Vec::new(),
    }
}

/// Scores feature subsets from per-fold centred Gram matrices, so a subset
/// costs O(k³) per fold instead of a fresh factorisation of the design.
struct SubsetEvaluator<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    assignment: Vec<usize>,
    folds: Vec<FoldGram>,
    objective: Objective,
}

impl<'a> SubsetEvaluator<'a> {
    fn new(x: &'a Matrix, y: &'a [f64], assignment: Vec<usize>, objective: Objective) -> Self {
        let k = y.len();
        let folds = match objective {
            Objective::Training => vec![centered_gram(x, y, &(0..k).collect::<Vec<_>>())],
            Objective::HeldOut => {
                let n_folds = assignment.iter().max().map_or(0, |m| m + 1);
                (0..n_folds)
                    .map(|f| {
                        let train: Vec<usize> = (0..k).filter(|&i| assignment[i] != f).collect();
                        let mut g = centered_gram(x, y, &train);
                        g.test_rows = (0..k).filter(|&i| assignment[i] == f).collect();
                        g
                    })
                    .collect()
            }
        };
        Self {
            x,
            y,
            assignment,
            folds,
            objective,
        }
    }

    fn evaluate(&self, subset: &[usize], a: &mut Vec<f64>, b: &mut Vec<f64>) -> f64 {
        let n = self.x.cols();
        let p = subset.len();
        let mut sse = 0.0;
        for fold in &self.folds {
            a.clear();
            b.clear();
            for &r in subset {
                for &c in subset {
                    a.push(fold.gram[r * n + c]);
                }
                b.push(fold.xty[r]);
            }
            if cholesky_solve(a, b, p, GRAM_PIVOT_TOL).is_none() {
                return self.exact(subset);
            }
            let bias = fold.ymean - subset.iter().zip(b.iter()).map(|(&c, t)| fold.xmean[c] * t).sum::<f64>();
            let rows: &[usize] = match self.objective {
                Objective::HeldOut => &fold.test_rows,
                Objective::Training => &[],
            };
            if self.objective == Objective::Training {
                for i in 0..self.y.len() {
                    let row = self.x.row(i);
                    let pred = bias + subset.iter().zip(b.iter()).map(|(&c, t)| row[c] * t).sum::<f64>();
                    sse += (pred - self.y[i]).powi(2);
                }
            }
            for &i in rows {
                let row = self.x.row(i);
                let pred = bias + subset.iter().zip(b.iter()).map(|(&c, t)| row[c] * t).sum::<f64>();
                sse += (pred - self.y[i]).powi(2);
            }
        }
        (sse / self.y.len() as f64).sqrt()
    }

    /// Reference path through the rank-revealing solver.
    fn exact(&self, subset: &[usize]) -> f64 {
        let xs = self.x.select_columns(subset);
        let value = match self.objective {
            Objective::HeldOut => linreg::cv_rmse_with_folds(&xs, self.y, &self.assignment),
            Objective::Training => linreg::fit_ols(&xs, self.y).map(|f| f.training_rmse),
        };
        value.unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub k: usize,
    pub objective: Objective,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            k: 3,
            objective: Objective::HeldOut,
        }
    }
}

/// Best subset found by an exhaustive search, before the final report.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub columns: Vec<usize>,
    pub objective_value: f64,
    pub evaluated: u64,
}

/// Exhaustively scores every k-subset of the columns of `x`; the minimum
/// wins and ties go to the lexicographically smallest subset.
pub fn search_subsets(x: &Matrix, y: &[f64], opts: SearchOptions, cfg: &StudyConfig) -> Result<SearchOutcome> {
    let n = x.cols();
    if opts.k == 0 || opts.k > n {
        return Err(Error::KTooLarge { k: opts.k, n });
    }
    let total = binomial(n, opts.k);
    if total > u128::from(cfg.subset_cap) {
        return Err(Error::CapExceeded {
            subsets: total,
            cap: cfg.subset_cap,
        });
    }
    if !x.is_finite() || !y.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("search input"));
    }
    let assignment = fold_assignments(y.len(), cfg.folds, cfg.seed)?;
    let evaluator = SubsetEvaluator::new(x, y, assignment, opts.objective);
    let total = total as usize;
    let chunks = total.div_ceil(CHUNK);

    let best_per_chunk = exec::map_indexed(cfg.execution, chunks, |c| {
        let start = c * CHUNK;
        let len = CHUNK.min(total - start);
        let mut comb = unrank_combination(start as u128, n, opts.k);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        let mut best: Option<(f64, Vec<usize>)> = None;
        for step in 0..len {
            if step > 0 {
                next_combination(&mut comb, n);
            }
            let mut v = evaluator.evaluate(&comb, &mut a, &mut b);
            if v.is_nan() {
                v = f64::INFINITY;
            }
            if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                best = Some((v, comb.clone()));
            }
        }
        best
    });

    let (objective_value, columns) = best_per_chunk
        .into_iter()
        .flatten()
        .fold(None, |acc: Option<(f64, Vec<usize>)>, cur| match acc {
            Some(ref a) if a.0 <= cur.0 => acc,
            _ => Some(cur),
        })
        .expect("at least one subset");
    Ok(SearchOutcome {
        columns,
        objective_value,
        evaluated: total as u64,
    })
}

/// Best k-subset of all columns of `pm` for one fine-tuning task, scored
/// against a control of width k.
pub fn best_k_search(
    pm: &ProbeMatrix,
    st: &ScoreTable,
    fine_task: &str,
    opts: SearchOptions,
    cfg: &StudyConfig,
) -> Result<SelectionResult> {
    let (x, y) = join(pm, st, fine_task)?;
    cfg.validate(y.len())?;
    let outcome = search_subsets(&x, &y, opts, cfg)?;
    let chosen: Vec<FeatureId> = outcome.columns.iter().map(|&j| pm.features()[j].clone()).collect();
    let report = regress(&x.select_columns(&outcome.columns), &y, chosen.clone(), fine_task, cfg)?;
    let mut notes = Vec::new();
    if opts.objective == Objective::Training {
        notes.push("subset chosen by in-sample RMSE".into());
    }
    Ok(SelectionResult {
        task: fine_task.to_string(),
        strategy: Strategy::BestK,
        chosen,
        report,
        subsets_evaluated: outcome.evaluated,
        notes,
    })
}
