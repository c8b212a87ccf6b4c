//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are always printed. Exits
//! non-zero when a criterion fails that is not listed in `KNOWN_FAILURES`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use probe_oracle::anova::anova_sequential;
use probe_oracle::datamodel::{FeatureId, ModelId, ProbeMatrix, ScoreTable, StudyConfig};
use probe_oracle::fingerprint::fingerprint;
use probe_oracle::linalg::{norm2, Matrix};
use probe_oracle::linreg::{control_features, control_rmse, cv_rmse, fit_ols, mc_uncertainty, regress, rmse_reduction};
use probe_oracle::probekit::{logreg, mlp, run_battery, run_battery_with, DecisionTree, ForestParams, MlpShape, RandomForest, Samples, TreeParams};
use probe_oracle::rng::fisher_yates;
use probe_oracle::selection::{best_k_search, SearchOptions};
use probe_oracle::special::f_cdf;
use probe_oracle::synth::{gen_embeddings, gen_planted_study, oracle_ols, EmbeddingKind};
use probe_oracle::{keyed_rng, ProbeMethod};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Criteria that fail under the specified protocol, with the reason.
const KNOWN_FAILURES: &[(&str, &str)] = &[
    (
        "null calibration",
        "best-of-95,284-subsets selection bias keeps the null mean near +38, far above the +10 bound",
    ),
    (
        "fingerprint null",
        "per-subset differences share one fold split and one matrix per replicate, so the t-test p-values are not uniform",
    ),
];

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = keyed_rng!(seed, "acceptance-gaussian");
    Matrix::from_fn(rows, cols, |_, _| normal(&mut rng))
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn ols_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let (mut worst_pred, mut worst_orth) = (0.0f64, 0.0f64);
    for seed in 0..100u64 {
        let mut rng = keyed_rng!(seed, "acceptance-shape");
        let n = rng.random_range(1..=20);
        let k = rng.random_range((2 * (n + 1)).min(50)..=50);
        let x = gaussian(k, n, seed);
        let y: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..0.9)).collect();
        let fit = fit_ols(&x, &y).expect("full-rank fit");
        let oracle = oracle_ols(&x, &y).expect("oracle converges");
        let a = x.with_bias();
        let (p, q) = (a.mul_vec(&fit.theta), a.mul_vec(&oracle));
        for (u, v) in p.iter().zip(&q) {
            worst_pred = worst_pred.max((u - v).abs());
        }
        let resid: Vec<f64> = p.iter().zip(&y).map(|(u, v)| u - v).collect();
        let g = a.tr_mul_vec(&resid);
        worst_orth = worst_orth.max(norm2(&g) / norm2(&y));
    }
    let t = start.elapsed();
    outcome(
        worst_pred < 1e-6 && worst_orth < 1e-8 && within(t, 10),
        format!("max |Δprediction| {worst_pred:.2e}, max orthogonality {worst_orth:.2e}, {t:.2?}"),
    )
}

fn metric_identities() -> Outcome {
    let mut ok = true;
    for i in 1..=50 {
        let c = i as f64 * 0.013;
        ok &= rmse_reduction(c, c).unwrap() == 0.0;
        ok &= rmse_reduction(0.0, c).unwrap() == 100.0;
    }
    ok &= rmse_reduction(0.0, 0.0).is_err();
    let study = gen_planted_study(25, 12, 3, 0.01, 7).unwrap();
    let cfg = StudyConfig::default();
    let mut checked = 0;
    for task in study.st.tasks() {
        let y = study.st.column(task).unwrap();
        let r = regress(study.pm.values(), &y, study.pm.features().to_vec(), task, &cfg).unwrap();
        ok &= r.recomputed_reduction().unwrap() == r.rmse_reduction;
        checked += 1;
    }
    outcome(ok, format!("100 identity cases, {checked} reports recomputed bit-exactly"))
}

fn control_scale_invariance() -> Outcome {
    let start = Instant::now();
    let mut rng = keyed_rng!(5u64, "acceptance-control");
    let y: Vec<f64> = (0..25).map(|_| rng.random_range(0.5..0.9)).collect();
    let variance = StudyConfig {
        control_sigma_sq: 0.1,
        ..StudyConfig::default()
    };
    let sigma = StudyConfig {
        control_sigma_sq: 0.01,
        ..StudyConfig::default()
    };
    let (mut identical, mut worst) = (0, 0.0f64);
    for draw in 1..=100u64 {
        let a = control_rmse(&y, 3, &variance, "COLA", draw).unwrap();
        let b = control_rmse(&y, 3, &sigma, "COLA", draw).unwrap();
        if a.to_bits() == b.to_bits() {
            identical += 1;
        }
        // refit on the scaled matrices themselves so the check is not vacuous
        let xa = control_features(25, 3, &variance, "COLA", draw);
        let xb = control_features(25, 3, &sigma, "COLA", draw);
        let (ra, rb) = (cv_rmse(&xa, &y, &variance).unwrap().0, cv_rmse(&xb, &y, &sigma).unwrap().0);
        worst = worst.max((ra - a).abs() / a).max((rb - a).abs() / a);
    }
    let t = start.elapsed();
    outcome(
        identical == 100 && worst < 1e-9 && within(t, 5),
        format!("{identical}/100 bit-identical, scaled refits within {worst:.1e}, {t:.2?}"),
    )
}

fn planted_support_recovery() -> Outcome {
    let start = Instant::now();
    let cfg = StudyConfig::default();
    let mut exact = 0;
    for seed in 0..20u64 {
        let study = gen_planted_study(25, 84, 3, 0.0, seed).unwrap();
        let task = &study.st.tasks()[seed as usize % study.st.tasks().len()];
        let r = best_k_search(&study.pm, &study.st, task, SearchOptions::default(), &cfg).unwrap();
        if r.chosen == study.true_support[task] && r.report.rmse_cv < 1e-9 {
            exact += 1;
        }
    }
    let (mut recovered, mut min_reduction) = (0, f64::INFINITY);
    for seed in 0..50u64 {
        let study = gen_planted_study(25, 84, 3, 0.005, 1000 + seed).unwrap();
        let task = &study.st.tasks()[seed as usize % study.st.tasks().len()];
        let r = best_k_search(&study.pm, &study.st, task, SearchOptions::default(), &cfg).unwrap();
        if r.chosen == study.true_support[task] {
            recovered += 1;
        }
        min_reduction = min_reduction.min(r.report.rmse_reduction);
    }
    let t = start.elapsed();
    outcome(
        exact == 20 && recovered >= 45 && min_reduction >= 90.0 && within(t, 600),
        format!("noiseless {exact}/20 exact, noise 0.005 {recovered}/50 recovered, min reduction {min_reduction:.2}, {t:.2?}"),
    )
}

fn null_calibration() -> Outcome {
    let cfg = StudyConfig::default();
    let mut reductions = Vec::new();
    for seed in 0..50u64 {
        let study = gen_planted_study(25, 84, 3, 0.0, 500 + seed).unwrap();
        let mut rng = keyed_rng!(seed, "acceptance-null-target");
        let rows: Vec<Vec<f64>> = (0..25).map(|_| vec![rng.random_range(0.5..0.9)]).collect();
        let st = ScoreTable::new(study.pm.models().to_vec(), vec!["NULL".into()], rows).unwrap();
        let c = StudyConfig { seed, ..cfg.clone() };
        let r = best_k_search(&study.pm, &st, "NULL", SearchOptions::default(), &c).unwrap();
        reductions.push(r.report.rmse_reduction);
    }
    let (m, sd) = mean_sd(&reductions);
    outcome(
        (-10.0..=10.0).contains(&m),
        format!("mean best-3 reduction {m:.2} (sd {sd:.2}, 50 seeds), band [-10, 10]"),
    )
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

/// RSS of the intercept plus the first `m` columns, through nalgebra's SVD.
fn nested_rss(x: &Matrix, y: &[f64], m: usize) -> f64 {
    let a = DMatrix::from_fn(x.rows(), m + 1, |i, j| if j == 0 { 1.0 } else { x.get(i, j - 1) });
    let b = DVector::from_column_slice(y);
    let theta = a.clone().svd(true, true).solve(&b, 1e-12).unwrap();
    (a * theta - b).norm_squared()
}

fn anova_instance(seed: u64, k: usize, n: usize) -> (Matrix, Vec<f64>) {
    let mut rng = keyed_rng!(seed, "acceptance-anova");
    let x = Matrix::from_fn(k, n, |_, _| rng.random_range(0.5..1.0));
    let y = (0..k)
        .map(|i| 0.3 + 0.4 * x.get(i, 0) - 0.2 * x.get(i, n / 2) + 0.02 * normal(&mut rng))
        .collect();
    (x, y)
}

fn anova_oracle() -> Outcome {
    let ids: Vec<FeatureId> = (1..=12).map(|l| FeatureId::best("Tense", l)).collect();
    let (x, y) = anova_instance(2024, 25, 12);
    let table = anova_sequential(&x, &y, &ids).unwrap();
    let rss: Vec<f64> = (0..=12).map(|m| nested_rss(&x, &y, m)).collect();
    let mse = rss[12] / 12.0;
    let mut worst = (table.residual.ss - rss[12]).abs() / table.total_ss;
    for (i, row) in table.rows.iter().enumerate() {
        let ss = rss[i] - rss[i + 1];
        worst = worst.max((row.sequential_ss - ss).abs() / table.total_ss);
        worst = worst.max((row.f_stat - ss / mse).abs() / (ss / mse).max(1.0));
        let p = 1.0 - f_cdf(ss / mse, 1.0, 12.0).unwrap();
        worst = worst.max((row.p_value - p).abs());
    }
    let mut identity_ok = 0;
    for seed in 0..200u64 {
        let n = 1 + seed as usize % 12;
        let (x, y) = anova_instance(seed, 2 * n + 6, n);
        let t = anova_sequential(&x, &y, &ids[..n]).unwrap();
        let parts = t.explained_ss() + t.residual.ss;
        if (parts - t.total_ss).abs() <= 1e-8 * t.total_ss {
            identity_ok += 1;
        }
    }
    let q = f_cdf(4.7472, 1.0, 12.0).unwrap();
    outcome(
        worst < 1e-8 && identity_ok == 200 && (q - 0.95).abs() <= 1e-3 && table.residual.dof == 12,
        format!("max deviation {worst:.1e}, identity {identity_ok}/200, f_cdf(4.7472; 1, 12) = {q:.6}"),
    )
}

fn uncertainty_trend() -> Outcome {
    let start = Instant::now();
    let (mut larger, mut ratios3) = (0, Vec::new());
    for rep in 0..50u64 {
        let mut rng = keyed_rng!(rep, "acceptance-uncertainty");
        let y: Vec<f64> = (0..25).map(|_| rng.random_range(0.5..0.9)).collect();
        let cfg = StudyConfig {
            seed: rep,
            ..StudyConfig::default()
        };
        let r3 = mc_uncertainty(&y, 3, &cfg, "COLA").unwrap().ratio;
        let r12 = mc_uncertainty(&y, 12, &cfg, "COLA").unwrap().ratio;
        if r12 > r3 {
            larger += 1;
        }
        ratios3.push(r3);
    }
    let (m, _) = mean_sd(&ratios3);
    let t = start.elapsed();
    outcome(
        larger >= 48 && (3.0..=9.0).contains(&m) && within(t, 120),
        format!("12 > 3 features in {larger}/50, mean 3-feature ratio {m:.2}%, {t:.2?}"),
    )
}

fn test_accuracy(kind: EmbeddingKind, dim: usize, n: usize, sep: f64, seed: u64, method: ProbeMethod) -> f64 {
    let ds = gen_embeddings(kind, dim, n, sep, seed).unwrap();
    run_battery_with(&ds, 11, &[method]).unwrap().results[0].test_accuracy
}

fn random_samples(seed: u64, n: usize, dim: usize, classes: usize) -> Samples {
    let mut rng = keyed_rng!(seed, "acceptance-samples");
    let x = (0..n * dim).map(|_| normal(&mut rng)).collect();
    let y = (0..n).map(|i| if i < classes { i } else { rng.random_range(0..classes) }).collect();
    Samples::new(dim, x, y)
}

fn max_gradient_error(f: impl Fn(&[f64]) -> (f64, Vec<f64>), p: &[f64]) -> f64 {
    let (_, g) = f(p);
    let mut worst = 0.0f64;
    for j in 0..p.len() {
        let (mut hi, mut lo) = (p.to_vec(), p.to_vec());
        hi[j] += 1e-5;
        lo[j] -= 1e-5;
        let fd = (f(&hi).0 - f(&lo).0) / 2e-5;
        worst = worst.max((fd - g[j]).abs() / fd.abs().max(g[j].abs()).max(1e-6));
    }
    worst
}

fn classifier_battery() -> Outcome {
    let start = Instant::now();
    // class means 4σ either side of the boundary
    let blobs_lr = test_accuracy(EmbeddingKind::Blobs, 8, 500, 8.0, 1, ProbeMethod::LogReg);
    let blobs_svm = test_accuracy(EmbeddingKind::Blobs, 8, 500, 8.0, 1, ProbeMethod::SVM);
    let xor_mlp = test_accuracy(EmbeddingKind::Xor, 2, 500, 8.0, 2, ProbeMethod::MLP20);
    let xor_lr = test_accuracy(EmbeddingKind::Xor, 2, 500, 8.0, 2, ProbeMethod::LogReg);

    let mut null = [0.0; 7];
    for seed in 0..5u64 {
        let ds = gen_embeddings(EmbeddingKind::Null, 4, 1000, 0.0, 100 + seed).unwrap();
        for (s, r) in null.iter_mut().zip(&run_battery(&ds, seed).unwrap().results) {
            *s += r.test_accuracy / 5.0;
        }
    }
    let null_worst = null.iter().map(|a| (a - 0.5).abs()).fold(0.0, f64::max);

    let mut grad = 0.0f64;
    for seed in 0..5u64 {
        let s = random_samples(seed, 12, 4, 3);
        let mut rng = keyed_rng!(seed, "acceptance-params");
        let p: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
        grad = grad.max(max_gradient_error(|q| logreg::loss_and_grad(q, &s, 3, 0.1), &p));

        let s = random_samples(seed, 10, 3, 2);
        let shape = MlpShape {
            inputs: 3,
            hidden: 6,
            outputs: 2,
        };
        let p: Vec<f64> = mlp::init_params(shape, &mut keyed_rng!(seed, "acceptance-init"))
            .iter()
            .enumerate()
            .map(|(i, v)| v + 0.01 * (i as f64).sin())
            .collect();
        let idx: Vec<usize> = (0..s.len()).collect();
        grad = grad.max(max_gradient_error(|q| mlp::loss_and_grad(shape, q, &s, &idx, 0.01), &p));
    }

    let s = random_samples(8, 200, 5, 3);
    let tree = DecisionTree::fit(&s, 3, TreeParams::default());
    let forest = RandomForest::fit(
        &s,
        3,
        ForestParams {
            trees: 1,
            bootstrap: false,
            tree: TreeParams::default(),
        },
        &mut keyed_rng!(1u64),
    );
    let probe = random_samples(9, 500, 5, 3);
    let same_tree = (0..probe.len()).all(|i| tree.predict(probe.row(i)) == forest.predict(probe.row(i)));
    let t = start.elapsed();
    outcome(
        blobs_lr >= 0.99
            && blobs_svm >= 0.99
            && xor_mlp >= 0.95
            && xor_lr <= 0.60
            && null_worst <= 0.05
            && grad < 1e-4
            && same_tree
            && within(t, 180),
        format!(
            "blobs LogReg {blobs_lr:.3} SVM {blobs_svm:.3}; XOR MLP20 {xor_mlp:.3} LogReg {xor_lr:.3}; \
             null max |acc-0.5| {null_worst:.3}; gradient rel err {grad:.1e}; tree==forest {same_tree}; {t:.2?}"
        ),
    )
}

/// Gaussian probe features and family labels shuffled independently of them.
fn null_study(seed: u64, features: usize) -> (ProbeMatrix, Vec<String>) {
    let mut rng = keyed_rng!(seed, "acceptance-null-study");
    let models: Vec<ModelId> = (0..25).map(|i| ModelId::new(format!("m{i:02}"), "", "x")).collect();
    let feats: Vec<FeatureId> = (0..features).map(|j| FeatureId::best("Tense", j as u32 + 1)).collect();
    let rows = (0..25)
        .map(|_| (0..features).map(|_| 0.75 + 0.05 * normal(&mut rng)).collect())
        .collect();
    let pm = ProbeMatrix::new(models, feats, rows).unwrap();
    let mut fam: Vec<String> = (0..25).map(|i| format!("f{}", i % 5)).collect();
    fisher_yates(&mut fam, &mut rng);
    (pm, fam)
}

/// Asymptotic Kolmogorov tail with Stephens' small-sample correction.
fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let x = d * (sn + 0.12 + 0.11 / sn);
    let mut p = 0.0;
    for k in 1..=100 {
        let term = 2.0 * (-2.0 * (k * k) as f64 * x * x).exp();
        p += if k % 2 == 1 { term } else { -term };
    }
    p.clamp(0.0, 1.0)
}

fn fingerprint_null() -> Outcome {
    let start = Instant::now();
    let (mut diffs, mut ps) = (Vec::new(), Vec::new());
    for rep in 0..200u64 {
        let (pm, fam) = null_study(rep, 12);
        let cfg = StudyConfig {
            seed: rep,
            ..StudyConfig::default()
        };
        let r = fingerprint(&pm, &fam, 3, &cfg).unwrap();
        diffs.push(r.mean_diff);
        ps.push(r.p_value);
    }
    let (m, sd) = mean_sd(&diffs);
    let se = sd / (diffs.len() as f64).sqrt();
    ps.sort_by(f64::total_cmp);
    let n = ps.len();
    let d = ps
        .iter()
        .enumerate()
        .map(|(i, &p)| ((i + 1) as f64 / n as f64 - p).max(p - i as f64 / n as f64))
        .fold(0.0, f64::max);
    let ks_p = ks_p_value(d, n);
    let t = start.elapsed();
    outcome(
        m.abs() <= 2.0 * se && ks_p >= 0.01,
        format!("mean_diff {m:.5} (2·SE {:.5}); KS D {d:.3}, p {ks_p:.2e}; {t:.2?}", 2.0 * se),
    )
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_probe-oracle"))
        .args(args)
        .env_remove("PROBE_ORACLE_THREADS")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// Every generated file under `dir` except run manifests, by name.
fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file() && !p.to_string_lossy().ends_with("manifest.json"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn run_suite(root: &Path, threads: &str) -> Result<Vec<(String, Vec<u8>)>, String> {
    let work = root.join(format!("t{threads}"));
    fs::create_dir_all(&work).unwrap();
    let planted = work.join("planted");
    let emb = work.join("emb");
    let probes = work.join("probes.csv");
    let pemb_scores = root.join("pemb_scores.csv");
    let t = ["--threads", threads];

    let mut runs: Vec<Vec<String>> = vec![
        vec!["synth", "planted", path(&planted), "--features", "24", "--noise", "0.01"],
        vec!["synth", "embeddings", path(&emb), "--models", "6", "--probing-tasks", "1", "--layers", "3", "--dim", "4", "--n-per-class", "40"],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    let study = [
        "--probes".to_string(),
        path(&planted.join("probes.csv")).to_string(),
        "--scores".to_string(),
        path(&planted.join("scores.csv")).to_string(),
    ];
    let probe_study = ["--probes".to_string(), path(&probes).to_string(), "--scores".to_string(), path(&pemb_scores).to_string()];
    let with = |head: &[&str], rest: &[String]| -> Vec<String> {
        head.iter().map(|s| s.to_string()).chain(rest.iter().cloned()).collect()
    };
    runs.push(vec!["probe".into(), path(&emb).into(), "--out".into(), path(&probes).into()]);
    runs.push(with(&["regress"], &study));
    runs.push(with(&["regress", "--json", "--metric", "rmse"], &study));
    runs.push(with(&["anova", "--compress"], &study));
    runs.push(with(&["one-layer"], &study));
    runs.push(with(&["select"], &study));
    runs.push(with(&["ablate-method", "--folds", "3", "--k", "2"], &probe_study));
    runs.push(vec!["mc".into(), "--scores".into(), path(&planted.join("scores.csv")).into()]);
    runs.push(vec!["fingerprint".into(), "--probes".into(), path(&planted.join("probes.csv")).into(), "--k".into(), "2".into()]);
    runs.push(vec!["summary".into(), "--scores".into(), path(&planted.join("scores.csv")).into()]);

    let mut reports = Vec::new();
    for (i, args) in runs.iter().enumerate() {
        let out = work.join(format!("report{i:02}.txt"));
        let mut full: Vec<&str> = args.iter().map(String::as_str).collect();
        full.extend(t);
        if args[0] != "probe" {
            full.extend(["--out", path(&out)]);
        }
        let o = cli(&full);
        if !o.status.success() {
            return Err(format!("`{}` exited {:?}: {}", full.join(" "), o.status.code(), String::from_utf8_lossy(&o.stderr)));
        }
        if args[0] == "probe" {
            reports.push((format!("{i:02} probe"), fs::read(&probes).unwrap()));
        } else {
            reports.push((format!("{i:02} {}", args[0]), fs::read(&out).unwrap()));
        }
    }
    for (name, bytes) in files(&planted).into_iter().chain(files(&emb)) {
        reports.push((format!("file {name}"), bytes));
    }
    Ok(reports)
}

/// Score table for the six models that `synth embeddings --models 6` names.
fn write_pemb_scores(root: &Path) {
    let mut rng = keyed_rng!(3u64, "acceptance-pemb-scores");
    let mut text = String::from("model,RTE,COLA\n");
    for i in 1..=6 {
        text.push_str(&format!(
            "model{i:02}::family{},{:.4},{:.4}\n",
            (i - 1) % 5 + 1,
            rng.random_range(0.5..0.9),
            rng.random_range(0.5..0.9)
        ));
    }
    fs::write(root.join("pemb_scores.csv"), text).unwrap();
}

fn cli_determinism() -> Outcome {
    let start = Instant::now();
    let root: PathBuf = tempfile::tempdir().unwrap().keep();
    write_pemb_scores(&root);
    let mut results = Vec::new();
    for threads in ["1", "4", "8"] {
        match run_suite(&root, threads) {
            Ok(r) => results.push(r),
            Err(e) => return outcome(false, e),
        }
    }
    // a second run at the same thread count
    fs::remove_dir_all(root.join("t1")).unwrap();
    match run_suite(&root, "1") {
        Ok(r) => results.push(r),
        Err(e) => return outcome(false, e),
    }
    let mut differing = Vec::new();
    for other in &results[1..] {
        for ((name, a), (_, b)) in results[0].iter().zip(other) {
            if a != b && !differing.contains(name) {
                differing.push(name.clone());
            }
        }
    }
    let same_count = results.iter().all(|r| r.len() == results[0].len());
    let _ = fs::remove_dir_all(&root);
    let t = start.elapsed();
    outcome(
        differing.is_empty() && same_count,
        if differing.is_empty() {
            format!("{} artifacts byte-identical across threads 1/4/8 and a repeat run, {t:.2?}", results[0].len())
        } else {
            format!("differs: {}", differing.join(", "))
        },
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("OLS oracle equivalence", ols_oracle_equivalence),
        ("metric identities", metric_identities),
        ("control-baseline scale invariance", control_scale_invariance),
        ("planted-support recovery", planted_support_recovery),
        ("null calibration", null_calibration),
        ("ANOVA oracle", anova_oracle),
        ("uncertainty trend", uncertainty_trend),
        ("classifier battery", classifier_battery),
        ("fingerprint null", fingerprint_null),
        ("CLI determinism", cli_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut unexpected = Vec::new();
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let o = check();
        let known = KNOWN_FAILURES.iter().find(|(n, _)| *n == name).map(|(_, why)| *why);
        match (o.pass, known) {
            (true, _) => println!("PASS {name}: {}", o.detail),
            (false, Some(why)) => println!("FAIL {name}: {} (known: {why})", o.detail),
            (false, None) => {
                println!("FAIL {name}: {}", o.detail);
                unexpected.push(name);
            }
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {}", unexpected.join(", "));
        std::process::exit(1);
    }
}
