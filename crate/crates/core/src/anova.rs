//! Sequential (Type-I) ANOVA over the regression's features.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datamodel::{join, FeatureId, ProbeMatrix, ProbeMethod, ScoreTable};
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::special::f_sf;

/// Sums of squares below this fraction of `Σ y²` are rounding noise.
const SS_ZERO_RELATIVE: f64 = 1e-20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaRow {
    pub feature_id: FeatureId,
    pub sequential_ss: f64,
    /// Zero when the feature is collinear with the ones entered before it.
    pub dof: usize,
    pub f_stat: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub ss: f64,
    pub dof: usize,
}

/// Rows are in entry order; the intercept enters first and is not listed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaTable {
    pub rows: Vec<AnovaRow>,
    pub residual: Residual,
    pub total_ss: f64,
}

impl AnovaTable {
    pub fn explained_ss(&self) -> f64 {
        self.rows.iter().map(|r| r.sequential_ss).sum()
    }
}

/// Householder reflector that zeroes `x[1..]`; returns `(v, alpha)` with
/// `H x = alpha e1`, or `None` for a zero vector.
fn reflector(x: &[f64]) -> Option<(Vec<f64>, f64)> {
    let norm = dot(x, x).sqrt();
    if norm == 0.0 {
        return None;
    }
    let alpha = if x[0] > 0.0 { -norm } else { norm };
    let mut v = x.to_vec();
    v[0] -= alpha;
    Some((v, alpha))
}

fn apply(v: &[f64], target: &mut [f64]) {
    let vv = dot(v, v);
    if vv > 0.0 {
        let s = 2.0 * dot(v, target) / vv;
        for (t, vi) in target.iter_mut().zip(v) {
            *t -= s * vi;
        }
    }
}

/// Enters the intercept and then each column of `x` in order, attributing to
/// each the drop in residual sum of squares.
pub fn anova_sequential(x: &Matrix, y: &[f64], feature_ids: &[FeatureId]) -> Result<AnovaTable> {
    let (k, n) = (x.rows(), x.cols());
    if feature_ids.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: feature_ids.len(),
        });
    }
    if y.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: y.len(),
        });
    }
    if k <= n + 1 {
        return Err(Error::InsufficientDof { models: k, params: n + 1 });
    }
    if !x.is_finite() || !y.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("ANOVA input"));
    }

    let mut columns: Vec<Vec<f64>> = std::iter::once(vec![1.0; k]).chain((0..n).map(|j| x.column(j))).collect();
    let original_norms: Vec<f64> = columns.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut qty = y.to_vec();
    let scale = dot(y, y);
    let zero_ss = SS_ZERO_RELATIVE * scale;

    let mut rank = 0;
    let mut raw = Vec::with_capacity(n);
    for j in 0..=n {
        let below = &columns[j][rank..];
        let remaining = dot(below, below).sqrt();
        let independent = rank < k && remaining > 1e-10 * original_norms[j] && original_norms[j] > 0.0;
        if !independent {
            if j > 0 {
                raw.push((0.0, 0));
            }
            continue;
        }
        let (v, _) = reflector(below).expect("non-zero column");
        for col in columns.iter_mut().skip(j + 1) {
            apply(&v, &mut col[rank..]);
        }
        apply(&v, &mut qty[rank..]);
        if j > 0 {
            let ss = qty[rank] * qty[rank];
            raw.push((if ss <= zero_ss { 0.0 } else { ss }, 1));
        }
        rank += 1;
    }

    let residual_dof = k - rank;
    if residual_dof == 0 {
        return Err(Error::InsufficientDof { models: k, params: rank });
    }
    let residual_ss = {
        let ss = dot(&qty[rank..], &qty[rank..]);
        if ss <= zero_ss {
            0.0
        } else {
            ss
        }
    };
    let mean = y.iter().sum::<f64>() / k as f64;
    let total_ss = y.iter().map(|v| (v - mean).powi(2)).sum();
    let mse = residual_ss / residual_dof as f64;

    let rows = raw
        .into_iter()
        .zip(feature_ids)
        .map(|((ss, dof), id)| {
            let (f_stat, p_value) = if ss == 0.0 || dof == 0 {
                (0.0, 1.0)
            } else if mse == 0.0 {
                (f64::INFINITY, 0.0)
            } else {
                let f = ss / dof as f64 / mse;
                (f, f_sf(f, dof as f64, residual_dof as f64)?)
            };
            Ok(AnovaRow {
                feature_id: id.clone(),
                sequential_ss: ss,
                dof,
                f_stat,
                p_value,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(AnovaTable {
        rows,
        residual: Residual {
            ss: residual_ss,
            dof: residual_dof,
        },
        total_ss,
    })
}

/// ANOVA of one fine-tuning task on all layers of one probing task,
/// entered layer ascending.
pub fn anova_for_task(
    pm: &ProbeMatrix,
    st: &ScoreTable,
    probing_task: &str,
    fine_task: &str,
    method: ProbeMethod,
) -> Result<AnovaTable> {
    let cols = pm.task_columns(probing_task, method);
    if cols.is_empty() {
        return Err(Error::UnknownTask(probing_task.to_string()));
    }
    let (x, y) = join(pm, st, fine_task)?;
    let ids: Vec<FeatureId> = cols.iter().map(|&j| pm.features()[j].clone()).collect();
    anova_sequential(&x.select_columns(&cols), &y, &ids)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAnova {
    pub fine_task: String,
    pub probing_task: String,
    pub table: AnovaTable,
}

/// ANOVA tables for every (probing task, fine-tuning task) pair.
pub fn anova_study(pm: &ProbeMatrix, st: &ScoreTable, method: ProbeMethod) -> Result<Vec<TaskAnova>> {
    let mut out = Vec::new();
    for probing_task in pm.probing_tasks() {
        if pm.task_columns(&probing_task, method).is_empty() {
            continue;
        }
        for fine_task in st.tasks() {
            out.push(TaskAnova {
                fine_task: fine_task.clone(),
                probing_task: probing_task.clone(),
                table: anova_for_task(pm, st, &probing_task, fine_task, method)?,
            });
        }
    }
    Ok(out)
}

/// Significant layers per probing task (rows) and fine-tuning task (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSignificance {
    pub alpha: f64,
    pub probing_tasks: Vec<String>,
    pub fine_tasks: Vec<String>,
    /// `layers[p][f]`, ascending.
    pub layers: Vec<Vec<Vec<u32>>>,
    /// `min_p[p][layer]`: smallest p-value across fine-tuning tasks.
    pub min_p: Vec<BTreeMap<u32, f64>>,
}

pub fn significant_layers(tables: &[TaskAnova], alpha: f64) -> LayerSignificance {
    let mut probing_tasks: Vec<String> = Vec::new();
    let mut fine_tasks: Vec<String> = Vec::new();
    for t in tables {
        for row in &t.table.rows {
            if !probing_tasks.contains(&row.feature_id.probing_task) {
                probing_tasks.push(row.feature_id.probing_task.clone());
            }
        }
        if !fine_tasks.contains(&t.fine_task) {
            fine_tasks.push(t.fine_task.clone());
        }
    }
    probing_tasks.sort();
    let mut layers = vec![vec![Vec::new(); fine_tasks.len()]; probing_tasks.len()];
    let mut min_p = vec![BTreeMap::new(); probing_tasks.len()];
    for t in tables {
        let f = fine_tasks.iter().position(|x| *x == t.fine_task).expect("collected");
        for row in &t.table.rows {
            let p = probing_tasks
                .binary_search(&row.feature_id.probing_task)
                .expect("collected");
            let entry = min_p[p].entry(row.feature_id.layer).or_insert(f64::INFINITY);
            *entry = entry.min(row.p_value);
            if row.p_value < alpha {
                layers[p][f].push(row.feature_id.layer);
            }
        }
    }
    for row in &mut layers {
        for cell in row {
            cell.sort_unstable();
            cell.dedup();
        }
    }
    LayerSignificance {
        alpha,
        probing_tasks,
        fine_tasks,
        layers,
        min_p,
    }
}

/// `"None"` for an empty list, else comma-joined layers, optionally with
/// runs of three or more compressed to `a-b`.
pub fn format_layers(layers: &[u32], compress: bool) -> String {
    if layers.is_empty() {
        return "None".to_string();
    }
    if !compress {
        return layers.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
    }
    let mut parts = Vec::new();
    let mut i = 0;
    while i < layers.len() {
        let mut j = i;
        while j + 1 < layers.len() && layers[j + 1] == layers[j] + 1 {
            j += 1;
        }
        if j >= i + 2 {
            parts.push(format!("{}-{}", layers[i], layers[j]));
        } else {
            parts.extend(layers[i..=j].iter().map(u32::to_string));
        }
        i = j + 1;
    }
    parts.join(",")
}
