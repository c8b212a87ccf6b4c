//! One-vs-rest linear SVM trained by Pegasos-style subgradient steps, with an
//! optional random-Fourier-feature map approximating an RBF kernel.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::data::{argmax, Samples, Standardizer};
use crate::rng::{fisher_yates, StreamRng};

#[derive(Debug, Clone, PartialEq)]
struct FourierMap {
    /// `features × dim`
    w: Vec<f64>,
    b: Vec<f64>,
    dim: usize,
}

impl FourierMap {
    fn new(dim: usize, features: usize, gamma: f64, rng: &mut StreamRng) -> Self {
        let sd = (2.0 * gamma).sqrt();
        let w = (0..features * dim)
            .map(|_| sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect();
        let b = (0..features).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        Self { w, b, dim }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let scale = (2.0 / self.b.len() as f64).sqrt();
        self.b
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let w = &self.w[k * self.dim..(k + 1) * self.dim];
                scale * (b + w.iter().zip(x).map(|(p, q)| p * q).sum::<f64>()).cos()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Svm {
    classes: usize,
    dim: usize,
    /// `classes × (dim + 1)`, bias last.
    weights: Vec<f64>,
    standardizer: Standardizer,
    fourier: Option<FourierMap>,
}

pub struct SvmTraining {
    pub classes: usize,
    pub lambda: f64,
    pub epochs: usize,
    /// `(features, gamma)` for the random-Fourier-feature mode.
    pub rbf: Option<(usize, f64)>,
}

impl Svm {
    pub fn fit(s: &Samples, cfg: &SvmTraining, rng: &mut StreamRng) -> Self {
        let standardizer = Standardizer::fit(s);
        let mut z = standardizer.transform(s);
        let fourier = cfg.rbf.map(|(features, gamma)| FourierMap::new(s.dim, features, gamma, rng));
        if let Some(map) = &fourier {
            let x: Vec<f64> = (0..z.len()).flat_map(|i| map.apply(z.row(i))).collect();
            z = Samples::new(map.b.len(), x, z.y.clone());
        }
        let d = z.dim;
        let stride = d + 1;
        let mut weights = vec![0.0; cfg.classes * stride];
        let mut order: Vec<usize> = (0..z.len()).collect();
        let mut t = 0u64;
        for _ in 0..cfg.epochs {
            fisher_yates(&mut order, rng);
            for &i in &order {
                t += 1;
                let eta = 1.0 / (cfg.lambda * t as f64);
                let x = z.row(i);
                for c in 0..cfg.classes {
                    let w = &mut weights[c * stride..(c + 1) * stride];
                    let label = if z.y[i] == c { 1.0 } else { -1.0 };
                    let margin = label * (w[d] + w.iter().zip(x).map(|(p, q)| p * q).sum::<f64>());
                    let shrink = 1.0 - eta * cfg.lambda;
                    w.iter_mut().for_each(|v| *v *= shrink);
                    if margin < 1.0 {
                        for (wj, xj) in w.iter_mut().zip(x) {
                            *wj += eta * label * xj;
                        }
                        w[d] += eta * label;
                    }
                }
            }
        }
        Self {
            classes: cfg.classes,
            dim: s.dim,
            weights,
            standardizer,
            fourier,
        }
    }

    pub fn decision(&self, x: &[f64]) -> Vec<f64> {
        let mut row = vec![0.0; self.dim];
        self.standardizer.transform_row(x, &mut row);
        if let Some(map) = &self.fourier {
            row = map.apply(&row);
        }
        let d = row.len();
        let stride = d + 1;
        (0..self.classes)
            .map(|c| {
                let w = &self.weights[c * stride..(c + 1) * stride];
                w[d] + w.iter().zip(&row).map(|(p, q)| p * q).sum::<f64>()
            })
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.decision(x))
    }
}
