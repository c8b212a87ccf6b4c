//! Multinomial logistic regression with an L2 penalty.

use super::data::{argmax, softmax_in_place, Samples, Standardizer};
use super::optim::{lbfgs, LbfgsReport};

#[derive(Debug, Clone, PartialEq)]
pub struct LogReg {
    classes: usize,
    dim: usize,
    /// `classes × (dim + 1)`, bias last.
    weights: Vec<f64>,
    standardizer: Standardizer,
    pub report: LbfgsReport,
}

/// Mean cross-entropy plus `l2/2 · ‖W‖²` (bias unpenalised), and its gradient.
/// `params` is `classes × (dim + 1)` row-major with the bias last.
pub fn loss_and_grad(params: &[f64], s: &Samples, classes: usize, l2: f64) -> (f64, Vec<f64>) {
    let d = s.dim;
    let stride = d + 1;
    let n = s.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; params.len()];
    let mut z = vec![0.0; classes];
    for i in 0..s.len() {
        let x = s.row(i);
        for (c, zc) in z.iter_mut().enumerate() {
            let w = &params[c * stride..(c + 1) * stride];
            *zc = w[d] + x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        }
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - z[s.y[i]];
        softmax_in_place(&mut z);
        z[s.y[i]] -= 1.0;
        for (c, r) in z.iter().enumerate() {
            let g = &mut grad[c * stride..(c + 1) * stride];
            for (gj, xj) in g.iter_mut().zip(x) {
                *gj += r * xj;
            }
            g[d] += r;
        }
    }
    loss /= n;
    grad.iter_mut().for_each(|g| *g /= n);
    for c in 0..classes {
        for j in 0..d {
            let w = params[c * stride + j];
            loss += 0.5 * l2 * w * w;
            grad[c * stride + j] += l2 * w;
        }
    }
    (loss, grad)
}

impl LogReg {
    pub fn fit(s: &Samples, classes: usize, l2: f64, max_iter: usize, gtol: f64) -> Self {
        let standardizer = Standardizer::fit(s);
        let z = standardizer.transform(s);
        let x0 = vec![0.0; classes * (s.dim + 1)];
        let (weights, report) = lbfgs(|p| loss_and_grad(p, &z, classes, l2), x0, 10, max_iter, gtol);
        Self {
            classes,
            dim: s.dim,
            weights,
            standardizer,
            report,
        }
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let mut row = vec![0.0; self.dim];
        self.standardizer.transform_row(x, &mut row);
        let stride = self.dim + 1;
        let mut z: Vec<f64> = (0..self.classes)
            .map(|c| {
                let w = &self.weights[c * stride..(c + 1) * stride];
                w[self.dim] + row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        softmax_in_place(&mut z);
        z
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.probabilities(x))
    }
}
