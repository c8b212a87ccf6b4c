use nalgebra::{DMatrix, DVector};
use probe_oracle::anova::{anova_sequential, format_layers, significant_layers, TaskAnova};
use probe_oracle::datamodel::FeatureId;
use probe_oracle::keyed_rng;
use probe_oracle::linalg::Matrix;
use probe_oracle::special::{f_cdf, t_cdf};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn layers(n: usize) -> Vec<FeatureId> {
    (1..=n as u32).map(|l| FeatureId::best("Tense", l)).collect()
}

fn instance(seed: u64, k: usize, n: usize) -> (Matrix, Vec<f64>) {
    let mut rng = keyed_rng!(seed, "anova");
    let x = Matrix::from_fn(k, n, |_, _| rng.random_range(0.5..1.0));
    let y = (0..k)
        .map(|i| 0.3 + 0.4 * x.get(i, 0) - 0.2 * x.get(i, n / 2) + 0.02 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect();
    (x, y)
}

/// RSS of the intercept plus the first `m` columns, through nalgebra's SVD.
fn nested_rss(x: &Matrix, y: &[f64], m: usize) -> f64 {
    let k = x.rows();
    let a = DMatrix::from_fn(k, m + 1, |i, j| if j == 0 { 1.0 } else { x.get(i, j - 1) });
    let b = DVector::from_column_slice(y);
    let theta = a.clone().svd(true, true).solve(&b, 1e-12).unwrap();
    (a * theta - b).norm_squared()
}

/// Simpson's rule on the F density, refined until two levels agree.
fn f_cdf_quadrature(x: f64, d1: f64, d2: f64) -> f64 {
    let ln_b = |a: f64, b: f64| {
        let lg = |v: f64| statistical_ln_gamma(v);
        lg(a) + lg(b) - lg(a + b)
    };
    let norm = (d1 / 2.0) * (d1 / d2).ln() - ln_b(d1 / 2.0, d2 / 2.0);
    // substitute t = u² to remove the endpoint singularity when d1 = 1
    let g = |u: f64| {
        let t = u * u;
        if t == 0.0 {
            return if d1 == 1.0 { 2.0 * norm.exp() } else { 0.0 };
        }
        let ln = norm + (d1 / 2.0 - 1.0) * t.ln() - ((d1 + d2) / 2.0) * (1.0 + d1 * t / d2).ln();
        2.0 * u * ln.exp()
    };
    let simpson = |n: usize| {
        let h = x.sqrt() / n as f64;
        let mut s = g(0.0) + g(x.sqrt());
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(i as f64 * h);
        }
        s * h / 3.0
    };
    let mut n = 64;
    let mut prev = simpson(n);
    loop {
        n *= 2;
        let cur = simpson(n);
        if (cur - prev).abs() < 1e-12 || n > 1 << 22 {
            return cur;
        }
        prev = cur;
    }
}

/// Stirling series with shift, independent of the crate's Lanczos version.
fn statistical_ln_gamma(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < 30.0 {
        shift -= x.ln();
        x += 1.0;
    }
    let x2 = x * x;
    shift + (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x) - 1.0 / (360.0 * x * x2)
        + 1.0 / (1260.0 * x2 * x2 * x)
}

#[test]
fn sequential_table_matches_nested_rss() {
    let (x, y) = instance(2024, 25, 12);
    let table = anova_sequential(&x, &y, &layers(12)).unwrap();
    assert_eq!(table.residual.dof, 12);
    let rss: Vec<f64> = (0..=12).map(|m| nested_rss(&x, &y, m)).collect();
    let mse = rss[12] / 12.0;
    assert!((table.residual.ss - rss[12]).abs() <= 1e-8 * table.total_ss);
    for (i, row) in table.rows.iter().enumerate() {
        let ss = rss[i] - rss[i + 1];
        assert!((row.sequential_ss - ss).abs() <= 1e-8 * table.total_ss, "row {i}");
        let f = ss / mse;
        assert!((row.f_stat - f).abs() <= 1e-8 * f.max(1.0), "row {i}: {} vs {f}", row.f_stat);
        let p = 1.0 - f_cdf_quadrature(f, 1.0, 12.0);
        assert!((row.p_value - p).abs() < 1e-8, "row {i}: {} vs {p}", row.p_value);
    }
}

#[test]
fn f_cdf_matches_density_integration() {
    let dofs = [(1.0, 12.0), (2.0, 5.0), (3.0, 30.0), (7.0, 2.0), (12.0, 12.0)];
    let xs = [0.05, 0.7, 1.9, 4.7472];
    let mut checked = 0;
    for (d1, d2) in dofs {
        for x in xs {
            let want = f_cdf_quadrature(x, d1, d2);
            let got = f_cdf(x, d1, d2).unwrap();
            assert!((got - want).abs() < 1e-6, "F({x}; {d1}, {d2}) = {got}, quadrature {want}");
            checked += 1;
        }
    }
    assert_eq!(checked, 20);
    assert!((f_cdf(4.7472, 1.0, 12.0).unwrap() - 0.95).abs() < 1e-3);
    assert_eq!(f_cdf(0.0, 3.0, 4.0).unwrap(), 0.0);
    assert!(f_cdf(1.0, 0.0, 4.0).is_err());
}

#[test]
fn t_cdf_properties() {
    // normal limit: Φ(1.6449) ≈ 0.95
    assert!((t_cdf(1.6449, 1e6).unwrap() - 0.95).abs() < 1e-3);
    for dof in [1.0, 3.5, 40.0] {
        assert_eq!(t_cdf(0.0, dof).unwrap(), 0.5);
        let mut prev = 0.0;
        for i in -40..=40 {
            let v = t_cdf(i as f64 * 0.25, dof).unwrap();
            assert!(v >= prev && (0.0..=1.0).contains(&v));
            prev = v;
        }
    }
    assert!(t_cdf(1.0, 0.5).is_err());
}

#[test]
fn f_cdf_is_monotone() {
    let mut prev = 0.0;
    for i in 0..200 {
        let v = f_cdf(i as f64 * 0.05, 4.0, 9.0).unwrap();
        assert!(v >= prev);
        prev = v;
    }
}

#[test]
fn planted_layers_are_flagged() {
    let mut tables = Vec::new();
    for (t, task) in ["RTE", "COLA", "MRPC"].iter().enumerate() {
        let mut rng = keyed_rng!(t as u64, "planted-layers");
        let x = Matrix::from_fn(25, 6, |_, _| rng.random_range(0.5..1.0));
        let y: Vec<f64> = (0..25)
            .map(|i| 0.5 * x.get(i, 0) + 0.5 * x.get(i, 2) + 0.05 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        tables.push(TaskAnova {
            fine_task: task.to_string(),
            probing_task: "Tense".into(),
            table: anova_sequential(&x, &y, &layers(6)).unwrap(),
        });
    }
    let sig = significant_layers(&tables, 0.05);
    // chance can add a spurious layer; the planted pair must always be present
    let mut hits = 0;
    for cell in &sig.layers[0] {
        assert!(cell.contains(&1) && cell.contains(&3), "{cell:?}");
        hits += usize::from(cell == &vec![1, 3]);
    }
    assert!(hits >= 2);
    assert_eq!(format_layers(&[1, 3], false), "1,3");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decomposition_identity(seed in 0u64..100_000, n in 1usize..8) {
        let (x, y) = instance(seed, 2 * n + 6, n);
        let t = anova_sequential(&x, &y, &layers(n)).unwrap();
        let parts: f64 = t.rows.iter().map(|r| r.sequential_ss).sum::<f64>() + t.residual.ss;
        prop_assert!((parts - t.total_ss).abs() <= 1e-8 * t.total_ss);
        for r in &t.rows {
            prop_assert!(r.f_stat >= 0.0 && (0.0..=1.0).contains(&r.p_value));
        }
    }

    #[test]
    fn entry_order_keeps_residual(seed in 0u64..100_000) {
        let (x, y) = instance(seed, 20, 5);
        let order = [4usize, 1, 3, 0, 2];
        let permuted = x.select_columns(&order);
        let a = anova_sequential(&x, &y, &layers(5)).unwrap();
        let b = anova_sequential(&permuted, &y, &layers(5)).unwrap();
        prop_assert!((a.residual.ss - b.residual.ss).abs() <= 1e-10 * a.total_ss);
        prop_assert!((a.total_ss - b.total_ss).abs() <= 1e-12 * a.total_ss);
    }
}
