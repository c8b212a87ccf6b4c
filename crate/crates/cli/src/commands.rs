//! Subcommand implementations. Each returns a [`Report`]; rendering and
//! manifests are handled by the caller.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use probe_oracle::anova::{anova_study, format_layers, significant_layers};
use probe_oracle::datamodel::{
    probe_matrix_from_csv, probe_matrix_from_json, probe_matrix_to_csv, probe_matrix_to_json, read_embeddings,
    score_table_from_csv, score_table_from_json, score_table_to_csv, write_embeddings, Format,
};
use probe_oracle::fingerprint::fingerprint_study;
use probe_oracle::linreg::mc_uncertainty;
use probe_oracle::probekit::{build_probe_matrix, BuildOptions};
use probe_oracle::selection::{all_layers_one_task, best_k_search, one_layer_per_task, SearchOptions, SelectionResult};
use probe_oracle::synth::{gen_embedding_grid, gen_planted_study_with, EmbeddingGrid, PlantedParams};
use probe_oracle::{EmbeddingDataset, ProbeMatrix, ProbeMethod, ScoreTable, StudyConfig};
use serde_json::{json, Value};

use crate::args::{Metric, StudyInputs, SynthCommand};
use crate::report::{mean, num, pct, sha256_hex, Body, InputError, Inputs, Report, Table, UsageError};

fn input_error(path: &Path, e: impl ToString) -> anyhow::Error {
    InputError {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
    .into()
}

fn text(inputs: &mut Inputs, role: &str, path: &Path) -> Result<String> {
    let bytes = inputs.read(role, path)?;
    String::from_utf8(bytes).map_err(|e| input_error(path, e))
}

pub fn load_probes(inputs: &mut Inputs, path: &Path) -> Result<ProbeMatrix> {
    let t = text(inputs, "probes", path)?;
    let pm = match Format::from_path(path) {
        Format::Csv => probe_matrix_from_csv(&t),
        Format::Json => probe_matrix_from_json(&t),
    };
    pm.map_err(|e| input_error(path, e))
}

pub fn load_scores(inputs: &mut Inputs, path: &Path) -> Result<ScoreTable> {
    let t = text(inputs, "scores", path)?;
    let st = match Format::from_path(path) {
        Format::Csv => score_table_from_csv(&t),
        Format::Json => score_table_from_json(&t),
    };
    st.map_err(|e| input_error(path, e))
}

fn load_study(inputs: &mut Inputs, paths: &StudyInputs) -> Result<(ProbeMatrix, ScoreTable)> {
    Ok((load_probes(inputs, &paths.probes)?, load_scores(inputs, &paths.scores)?))
}

fn params(pairs: &[(&str, String)]) -> Vec<(String, String)> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn table_report(command: &str, p: Vec<(String, String)>, table: Table, result: Value) -> Report {
    Report {
        command: command.into(),
        params: p,
        body: Body::Table { table, result },
    }
}

fn features_cell(r: &SelectionResult) -> String {
    r.chosen.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

fn metric_value(r: &SelectionResult, metric: Metric) -> f64 {
    match metric {
        Metric::Reduction => r.report.rmse_reduction,
        Metric::Rmse => r.report.rmse_cv,
        Metric::Control => r.report.rmse_control,
    }
}

fn metric_cell(v: f64, metric: Metric) -> String {
    match metric {
        Metric::Reduction => pct(v),
        _ => num(v),
    }
}

/// Probing tasks with at least one column under `method`, in canonical order.
fn tasks_with(pm: &ProbeMatrix, method: ProbeMethod) -> Vec<String> {
    pm.probing_tasks()
        .into_iter()
        .filter(|t| !pm.task_columns(t, method).is_empty())
        .collect()
}

fn embedding_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| input_error(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "pemb"))
                .collect();
            found.sort();
            if found.is_empty() {
                return Err(input_error(p, "no .pemb files in directory"));
            }
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

pub fn probe(
    inputs: &mut Inputs,
    paths: &[PathBuf],
    samples_per_class: Option<usize>,
    methods: Option<Vec<ProbeMethod>>,
    cfg: &StudyConfig,
    json: bool,
) -> Result<Report> {
    let mut datasets: Vec<EmbeddingDataset> = Vec::new();
    for path in embedding_files(paths)? {
        let bytes = inputs.read("embeddings", &path)?;
        datasets.push(read_embeddings(bytes.as_slice()).map_err(|e| input_error(&path, e))?);
    }
    let mut opts = BuildOptions::new(cfg.seed);
    opts.samples_per_class = samples_per_class;
    opts.execution = cfg.execution;
    if let Some(m) = methods {
        let mut m = m;
        m.sort();
        m.dedup();
        opts.methods = m;
    }
    let pm = build_probe_matrix(&datasets, &opts)?;
    let method_list = opts.methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(",");
    let spc = samples_per_class.map_or("all".to_string(), |n| n.to_string());
    Ok(Report {
        command: "probe".into(),
        params: params(&[("samples_per_class", spc), ("methods", method_list)]),
        body: if json {
            Body::Raw {
                text: probe_matrix_to_json(&pm),
                csv: false,
            }
        } else {
            Body::Raw {
                text: probe_matrix_to_csv(&pm),
                csv: true,
            }
        },
    })
}

pub fn regress(inputs: &mut Inputs, paths: &StudyInputs, method: ProbeMethod, metric: Metric, cfg: &StudyConfig) -> Result<Report> {
    let (pm, st) = load_study(inputs, paths)?;
    let tasks = tasks_with(&pm, method);
    if tasks.is_empty() {
        return Err(UsageError(format!("the probe matrix has no {method} columns; pick another --method")).into());
    }
    let mut header = vec!["probing_task".to_string()];
    header.extend(st.tasks().iter().cloned());
    if metric == Metric::Reduction {
        header.push("Average".into());
    }
    let mut table = Table::new(header);
    let mut rows = Vec::new();
    for task in &tasks {
        let results = st
            .tasks()
            .iter()
            .map(|fine| all_layers_one_task(&pm, &st, task, fine, method, cfg))
            .collect::<probe_oracle::Result<Vec<_>>>()?;
        let values: Vec<f64> = results.iter().map(|r| metric_value(r, metric)).collect();
        let mut row = vec![task.clone()];
        row.extend(values.iter().map(|&v| metric_cell(v, metric)));
        if metric == Metric::Reduction {
            row.push(pct(mean(&values)));
        }
        table.push(row);
        rows.push(json!({ "probing_task": task, "results": results }));
    }
    let p = params(&[("method", method.to_string()), ("metric", format!("{metric:?}").to_lowercase())]);
    Ok(table_report("regress", p, table, json!({ "rows": rows })))
}

pub fn anova(
    inputs: &mut Inputs,
    paths: &StudyInputs,
    method: ProbeMethod,
    alpha: f64,
    compress: bool,
) -> Result<Report> {
    let (pm, st) = load_study(inputs, paths)?;
    let tables = anova_study(&pm, &st, method)?;
    if tables.is_empty() {
        return Err(UsageError(format!("the probe matrix has no {method} columns; pick another --method")).into());
    }
    let sig = significant_layers(&tables, alpha);
    let mut header = vec!["probing_task".to_string()];
    header.extend(sig.fine_tasks.iter().cloned());
    header.push("residual_dof".into());
    let mut table = Table::new(header);
    for (p, task) in sig.probing_tasks.iter().enumerate() {
        let mut row = vec![task.clone()];
        row.extend(sig.layers[p].iter().map(|cell| format_layers(cell, compress)));
        let dof = tables
            .iter()
            .find(|t| &t.probing_task == task)
            .map_or(0, |t| t.table.residual.dof);
        row.push(dof.to_string());
        table.push(row);
    }
    let p = params(&[("method", method.to_string()), ("alpha", alpha.to_string()), ("compress", compress.to_string())]);
    Ok(table_report("anova", p, table, json!({ "significance": sig, "tables": tables })))
}

fn long_header() -> Table {
    Table::new(["task", "reduction", "rmse_cv", "rmse_control", "features"])
}

fn long_rows(table: &mut Table, results: &[SelectionResult]) {
    for r in results {
        table.push(vec![
            r.task.clone(),
            pct(r.report.rmse_reduction),
            num(r.report.rmse_cv),
            num(r.report.rmse_control),
            features_cell(r),
        ]);
    }
    let reductions: Vec<f64> = results.iter().map(|r| r.report.rmse_reduction).collect();
    table.push(vec!["Average".into(), pct(mean(&reductions)), String::new(), String::new(), String::new()]);
}

pub fn one_layer(inputs: &mut Inputs, paths: &StudyInputs, method: ProbeMethod, alpha: f64, cfg: &StudyConfig) -> Result<Report> {
    let (pm, st) = load_study(inputs, paths)?;
    let tables = anova_study(&pm, &st, method)?;
    let sig = significant_layers(&tables, alpha);
    let results = st
        .tasks()
        .iter()
        .map(|fine| one_layer_per_task(&sig, &pm, &st, fine, method, cfg))
        .collect::<probe_oracle::Result<Vec<_>>>()?;
    let mut table = long_header();
    long_rows(&mut table, &results);
    let p = params(&[("method", method.to_string()), ("alpha", alpha.to_string())]);
    Ok(table_report("one-layer", p, table, json!({ "results": results })))
}

fn restrict(pm: &ProbeMatrix, method: Option<ProbeMethod>) -> Result<ProbeMatrix> {
    match method {
        None => Ok(pm.clone()),
        Some(m) => {
            let cols = pm.method_columns(m);
            if cols.is_empty() {
                return Err(UsageError(format!("the probe matrix has no {m} columns; pick another --method")).into());
            }
            Ok(pm.select(&cols))
        }
    }
}

pub fn select(inputs: &mut Inputs, paths: &StudyInputs, k: usize, method: Option<ProbeMethod>, cfg: &StudyConfig) -> Result<Report> {
    let (pm, st) = load_study(inputs, paths)?;
    let pm = restrict(&pm, method)?;
    let opts = SearchOptions {
        k,
        ..SearchOptions::default()
    };
    let results = st
        .tasks()
        .iter()
        .map(|fine| best_k_search(&pm, &st, fine, opts, cfg))
        .collect::<probe_oracle::Result<Vec<_>>>()?;
    let mut table = long_header();
    long_rows(&mut table, &results);
    let method_name = method.map_or("all".to_string(), |m| m.to_string());
    let p = params(&[("k", k.to_string()), ("method", method_name)]);
    Ok(table_report("select", p, table, json!({ "results": results })))
}

pub fn ablate_method(inputs: &mut Inputs, paths: &StudyInputs, k: usize, cfg: &StudyConfig) -> Result<Report> {
    let (pm, st) = load_study(inputs, paths)?;
    let mut header = vec!["method".to_string()];
    header.extend(st.tasks().iter().cloned());
    header.push("Average".into());
    let mut table = Table::new(header);
    let mut rows = Vec::new();
    let opts = SearchOptions {
        k,
        ..SearchOptions::default()
    };
    for method in pm.methods() {
        let sub = restrict(&pm, Some(method))?;
        let mut best_per_task = Vec::new();
        for fine in st.tasks() {
            let mut candidates = Vec::new();
            for task in tasks_with(&sub, method) {
                candidates.push(all_layers_one_task(&sub, &st, &task, fine, method, cfg)?);
            }
            if k <= sub.feature_count() {
                candidates.push(best_k_search(&sub, &st, fine, opts, cfg)?);
            }
            // first maximum wins, so ties favour the all-layers rows in task order
            let best = candidates
                .into_iter()
                .reduce(|a, b| if b.report.rmse_reduction > a.report.rmse_reduction { b } else { a })
                .expect("at least one probing task per method");
            best_per_task.push(best);
        }
        let values: Vec<f64> = best_per_task.iter().map(|r| r.report.rmse_reduction).collect();
        let mut row = vec![method.to_string()];
        row.extend(values.iter().map(|&v| pct(v)));
        row.push(pct(mean(&values)));
        table.push(row);
        rows.push(json!({ "method": method, "best": best_per_task }));
    }
    let p = params(&[("k", k.to_string())]);
    Ok(table_report("ablate-method", p, table, json!({ "rows": rows })))
}

pub fn mc(inputs: &mut Inputs, scores: &Path, widths: &[usize], cfg: &StudyConfig) -> Result<Report> {
    if widths.contains(&0) {
        return Err(UsageError("--features widths must be positive, e.g. --features 3,7,12".into()).into());
    }
    let st = load_scores(inputs, scores)?;
    let mut header = vec!["task".to_string()];
    header.extend(widths.iter().map(|w| format!("{w} features")));
    let mut table = Table::new(header);
    let mut rows = Vec::new();
    for task in st.tasks() {
        let y = st.column(task)?;
        let cells = widths
            .iter()
            .map(|&w| mc_uncertainty(&y, w, cfg, task))
            .collect::<probe_oracle::Result<Vec<_>>>()?;
        let mut row = vec![task.clone()];
        row.extend(cells.iter().map(|u| pct(u.ratio)));
        table.push(row);
        rows.push(json!({ "task": task, "widths": widths, "uncertainty": cells }));
    }
    let list = widths.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
    Ok(table_report("mc", params(&[("features", list)]), table, json!({ "rows": rows })))
}

pub fn fingerprint(inputs: &mut Inputs, probes: &Path, k: usize, method: ProbeMethod, cfg: &StudyConfig) -> Result<Report> {
    let pm = load_probes(inputs, probes)?;
    let pm = restrict(&pm, Some(method))?;
    let r = fingerprint_study(&pm, k, cfg)?;
    let mut table = Table::new([
        "subsets",
        "mean_diff",
        "sd_diff",
        "t_stat",
        "dof",
        "p_value",
        "max_accuracy",
        "trivial_baseline",
        "families",
        "stratified_folds",
    ]);
    table.push(vec![
        r.samples.to_string(),
        num(r.mean_diff),
        num(r.sd_diff),
        format!("{:.4}", r.t_stat),
        r.dof.to_string(),
        format!("{:.4e}", r.p_value),
        num(r.max_accuracy),
        num(r.trivial_baseline),
        r.families.len().to_string(),
        r.stratified_folds.to_string(),
    ]);
    let p = params(&[("k", k.to_string()), ("method", method.to_string())]);
    Ok(table_report("fingerprint", p, table, serde_json::to_value(&r)?))
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

pub fn summary(inputs: &mut Inputs, scores: &Path) -> Result<Report> {
    let st = load_scores(inputs, scores)?;
    let mut table = Table::new(["task", "models", "mean", "sd", "min", "median", "max"]);
    let mut rows = Vec::new();
    for task in st.tasks() {
        let mut y = st.column(task)?;
        y.sort_by(f64::total_cmp);
        let m = mean(&y);
        let sd = if y.len() > 1 {
            (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (y.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        let (lo, mid, hi) = (y[0], median(&y), y[y.len() - 1]);
        table.push(vec![task.clone(), y.len().to_string(), num(m), num(sd), num(lo), num(mid), num(hi)]);
        rows.push(json!({ "task": task, "models": y.len(), "mean": m, "sd": sd, "min": lo, "median": mid, "max": hi }));
    }
    Ok(table_report("summary", Vec::new(), table, json!({ "rows": rows })))
}

/// Writes `bytes` under `dir` and records its digest in `table`.
fn write_file(dir: &Path, name: &str, bytes: &[u8], table: &mut Table) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    table.push(vec![name.to_string(), sha256_hex(bytes)]);
    Ok(())
}

pub fn synth(cmd: &SynthCommand, cfg: &StudyConfig) -> Result<(Report, PathBuf)> {
    let mut table = Table::new(["file", "sha256"]);
    match cmd {
        SynthCommand::Planted {
            dir,
            models,
            features,
            k_true,
            noise,
            families,
            tasks,
        } => {
            let p = PlantedParams {
                models: *models,
                features: *features,
                k_true: *k_true,
                noise_sigma: *noise,
                seed: cfg.seed,
                tasks: tasks.clone(),
                families: *families,
            };
            let study = gen_planted_study_with(&p).map_err(|e| UsageError(e.to_string()))?;
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            write_file(dir, "probes.csv", probe_matrix_to_csv(&study.pm).as_bytes(), &mut table)?;
            write_file(dir, "scores.csv", score_table_to_csv(&study.st).as_bytes(), &mut table)?;
            let support: serde_json::Map<String, Value> = study
                .true_support
                .iter()
                .map(|(t, ids)| (t.clone(), json!(ids.iter().map(ToString::to_string).collect::<Vec<_>>())))
                .collect();
            let truth = json!({
                "params": p,
                "true_support": support,
                "true_theta": study.true_theta,
                "noise_sigma": study.noise_sigma,
                "clipped": study.clipped,
            });
            let mut truth_text = serde_json::to_string_pretty(&truth)?;
            truth_text.push('\n');
            write_file(dir, "truth.json", truth_text.as_bytes(), &mut table)?;
            if study.clipped > 0 {
                eprintln!("note: {} scores were clipped into [0, 1]", study.clipped);
            }
            let prm = params(&[
                ("models", models.to_string()),
                ("features", features.to_string()),
                ("k_true", k_true.to_string()),
                ("noise", noise.to_string()),
                ("families", families.to_string()),
                ("tasks", tasks.join(",")),
                ("clipped", study.clipped.to_string()),
            ]);
            Ok((table_report("synth planted", prm, table, truth), dir.clone()))
        }
        SynthCommand::Embeddings {
            dir,
            kind,
            models,
            probing_tasks,
            layers,
            dim,
            n_per_class,
            separation,
        } => {
            let grid = EmbeddingGrid {
                kind: *kind,
                models: *models,
                probing_tasks: *probing_tasks,
                layers: *layers,
                dim: *dim,
                n_per_class: *n_per_class,
                separation: *separation,
                seed: cfg.seed,
            };
            let datasets = gen_embedding_grid(&grid).map_err(|e| UsageError(e.to_string()))?;
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for ds in &datasets {
                let m = &ds.metadata;
                let name = format!("{}_{}_L{:02}.pemb", m.model_id.replace(':', "-"), m.probing_task, m.layer);
                let mut bytes = Vec::new();
                write_embeddings(ds, &mut bytes)?;
                write_file(dir, &name, &bytes, &mut table)?;
            }
            let prm = params(&[
                ("kind", format!("{kind:?}").to_lowercase()),
                ("models", models.to_string()),
                ("probing_tasks", probing_tasks.to_string()),
                ("layers", layers.to_string()),
                ("dim", dim.to_string()),
                ("n_per_class", n_per_class.to_string()),
                ("separation", separation.to_string()),
            ]);
            Ok((table_report("synth embeddings", prm, table, json!({ "grid": grid })), dir.clone()))
        }
    }
}
