//! Identifiers, validated matrices, study configuration and file formats.

mod embedding;
mod ids;
mod io;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use embedding::{read_embeddings, write_embeddings, EmbeddingDataset, EmbeddingMetadata, Split, SplitKind};
pub use ids::{FeatureId, ModelId, ProbeMethod, DEFAULT_LAYER_COUNT, GLUE_TASKS, STANDARD_PROBING_TASKS};
pub use io::{
    load_probe_matrix, load_score_table, probe_matrix_from_csv, probe_matrix_from_json, probe_matrix_to_csv,
    probe_matrix_to_json, save_probe_matrix, save_score_table, score_table_from_csv, score_table_from_json,
    score_table_to_csv, score_table_to_json, Format,
};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::Matrix;

/// Probing accuracies: one row per model, one column per feature.
///
/// Rows and columns are always held in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeMatrix {
    models: Vec<ModelId>,
    features: Vec<FeatureId>,
    values: Matrix,
}

fn check_unit_interval(row: &dyn ToString, column: &dyn ToString, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::ValueOutOfRange {
            row: row.to_string(),
            column: column.to_string(),
            value,
        })
    }
}

fn check_unique_models(models: &[ModelId]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for m in models {
        if !seen.insert(m.key()) {
            return Err(Error::DuplicateKey(m.to_string()));
        }
    }
    Ok(())
}

impl ProbeMatrix {
    /// Validates and canonicalises. `rows[k][j]` is the accuracy of
    /// `models[k]` on `features[j]`; `None` marks a missing cell.
    pub fn from_cells(models: Vec<ModelId>, features: Vec<FeatureId>, rows: Vec<Vec<Option<f64>>>) -> Result<Self> {
        if rows.len() != models.len() {
            return Err(Error::DimensionMismatch {
                expected: models.len(),
                actual: rows.len(),
            });
        }
        check_unique_models(&models)?;
        let mut seen = BTreeSet::new();
        for f in &features {
            if !seen.insert(f) {
                return Err(Error::DuplicateKey(f.to_string()));
            }
        }
        for (m, row) in models.iter().zip(&rows) {
            for (j, f) in features.iter().enumerate() {
                match row.get(j).copied().flatten() {
                    None => {
                        return Err(Error::MissingCell {
                            row: m.to_string(),
                            column: f.to_string(),
                        })
                    }
                    Some(v) => check_unit_interval(m, f, v)?,
                }
            }
            if row.len() > features.len() {
                return Err(Error::DimensionMismatch {
                    expected: features.len(),
                    actual: row.len(),
                });
            }
        }

        let mut row_order: Vec<usize> = (0..models.len()).collect();
        row_order.sort_by(|&a, &b| models[a].cmp(&models[b]));
        let mut col_order: Vec<usize> = (0..features.len()).collect();
        col_order.sort_by(|&a, &b| features[a].cmp(&features[b]));

        let values = Matrix::from_fn(models.len(), features.len(), |i, j| {
            rows[row_order[i]][col_order[j]].expect("checked above")
        });
        Ok(Self {
            models: row_order.iter().map(|&i| models[i].clone()).collect(),
            features: col_order.iter().map(|&j| features[j].clone()).collect(),
            values,
        })
    }

    pub fn new(models: Vec<ModelId>, features: Vec<FeatureId>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let cells = rows.into_iter().map(|r| r.into_iter().map(Some).collect()).collect();
        Self::from_cells(models, features, cells)
    }

    pub fn models(&self) -> &[ModelId] {
        &self.models
    }

    pub fn features(&self) -> &[FeatureId] {
        &self.features
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn model_count(&self) -> usize {
        self.models.len()
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn feature_index(&self, f: &FeatureId) -> Option<usize> {
        self.features.binary_search(f).ok()
    }

    /// Sorted, deduplicated probing task names.
    pub fn probing_tasks(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.features.iter().map(|f| f.probing_task.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }

    pub fn methods(&self) -> Vec<ProbeMethod> {
        let set: BTreeSet<ProbeMethod> = self.features.iter().map(|f| f.probe_method).collect();
        set.into_iter().collect()
    }

    /// Column indices for one probe method, in canonical order.
    pub fn method_columns(&self, method: ProbeMethod) -> Vec<usize> {
        (0..self.features.len())
            .filter(|&j| self.features[j].probe_method == method)
            .collect()
    }

    /// Column indices of one probing task under one method, layer ascending.
    pub fn task_columns(&self, task: &str, method: ProbeMethod) -> Vec<usize> {
        (0..self.features.len())
            .filter(|&j| self.features[j].probing_task == task && self.features[j].probe_method == method)
            .collect()
    }

    /// Restricts to a subset of columns (kept in canonical order).
    pub fn select(&self, columns: &[usize]) -> ProbeMatrix {
        let mut cols = columns.to_vec();
        cols.sort_unstable();
        cols.dedup();
        Self {
            models: self.models.clone(),
            features: cols.iter().map(|&j| self.features[j].clone()).collect(),
            values: self.values.select_columns(&cols),
        }
    }

    pub fn families(&self) -> Vec<String> {
        self.models.iter().map(|m| m.family.clone()).collect()
    }
}

/// Fine-tuning performance: one row per model, one column per downstream task.
///
/// Rows are canonical; task columns keep their declared order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    models: Vec<ModelId>,
    tasks: Vec<String>,
    values: Matrix,
}

impl ScoreTable {
    pub fn from_cells(models: Vec<ModelId>, tasks: Vec<String>, rows: Vec<Vec<Option<f64>>>) -> Result<Self> {
        if rows.len() != models.len() {
            return Err(Error::DimensionMismatch {
                expected: models.len(),
                actual: rows.len(),
            });
        }
        check_unique_models(&models)?;
        let mut seen = BTreeSet::new();
        for t in &tasks {
            if t.is_empty() {
                return Err(Error::InvalidArgument("empty task name".into()));
            }
            if !seen.insert(t) {
                return Err(Error::DuplicateKey(t.clone()));
            }
        }
        for (m, row) in models.iter().zip(&rows) {
            if row.len() > tasks.len() {
                return Err(Error::DimensionMismatch {
                    expected: tasks.len(),
                    actual: row.len(),
                });
            }
            for (j, t) in tasks.iter().enumerate() {
                match row.get(j).copied().flatten() {
                    None => {
                        return Err(Error::MissingCell {
                            row: m.to_string(),
                            column: t.clone(),
                        })
                    }
                    Some(v) => check_unit_interval(m, t, v)?,
                }
            }
        }
        let mut order: Vec<usize> = (0..models.len()).collect();
        order.sort_by(|&a, &b| models[a].cmp(&models[b]));
        let values = Matrix::from_fn(models.len(), tasks.len(), |i, j| rows[order[i]][j].expect("checked above"));
        Ok(Self {
            models: order.iter().map(|&i| models[i].clone()).collect(),
            tasks,
            values,
        })
    }

    pub fn new(models: Vec<ModelId>, tasks: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let cells = rows.into_iter().map(|r| r.into_iter().map(Some).collect()).collect();
        Self::from_cells(models, tasks, cells)
    }

    pub fn models(&self) -> &[ModelId] {
        &self.models
    }

    pub fn tasks(&self) -> &[String] {
        &self.tasks
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn task_index(&self, task: &str) -> Result<usize> {
        self.tasks
            .iter()
            .position(|t| t == task)
            .ok_or_else(|| Error::UnknownTask(task.to_string()))
    }

    pub fn column(&self, task: &str) -> Result<Vec<f64>> {
        Ok(self.values.column(self.task_index(task)?))
    }
}

/// Aligns probe features and one fine-tuning task's scores by model.
pub fn join(pm: &ProbeMatrix, st: &ScoreTable, task: &str) -> Result<(Matrix, Vec<f64>)> {
    let column = st.task_index(task)?;
    ensure_same_models(pm.models(), st.models())?;
    // both sides are canonical, so equal model sets imply equal row order
    Ok((pm.values().clone(), st.values().column(column)))
}

pub fn ensure_same_models(left: &[ModelId], right: &[ModelId]) -> Result<()> {
    let l: BTreeMap<(&str, &str), &ModelId> = left.iter().map(|m| (m.key(), m)).collect();
    let r: BTreeMap<(&str, &str), &ModelId> = right.iter().map(|m| (m.key(), m)).collect();
    let only_left: Vec<String> = l.keys().filter(|k| !r.contains_key(*k)).map(|k| l[k].to_string()).collect();
    let only_right: Vec<String> = r.keys().filter(|k| !l.contains_key(*k)).map(|k| r[k].to_string()).collect();
    if only_left.is_empty() && only_right.is_empty() {
        Ok(())
    } else {
        Err(Error::ModelMismatch {
            only_left: only_left.join(", "),
            only_right: only_right.join(", "),
        })
    }
}

/// Study-wide settings shared by every analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub seed: u64,
    pub folds: usize,
    pub control_draws: usize,
    /// Variance of the control features.
    pub control_sigma_sq: f64,
    pub samples_per_class: usize,
    /// Report the control RMSE from draw 1 only instead of the mean over draws.
    pub single_draw: bool,
    /// Upper bound on the number of subsets an exhaustive search may visit.
    pub subset_cap: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            folds: 5,
            control_draws: 100,
            control_sigma_sq: 0.1,
            samples_per_class: 1200,
            single_draw: false,
            subset_cap: 10_000_000,
            execution: Execution::Parallel,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self, models: usize) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidArgument(format!("folds must be at least 2, got {}", self.folds)));
        }
        if self.folds > models {
            return Err(Error::TooFewModels {
                folds: self.folds,
                models,
            });
        }
        if self.control_draws == 0 {
            return Err(Error::InvalidArgument("control_draws must be at least 1".into()));
        }
        if !(self.control_sigma_sq > 0.0 && self.control_sigma_sq.is_finite()) {
            return Err(Error::InvalidArgument("control_sigma_sq must be positive".into()));
        }
        Ok(())
    }
}
