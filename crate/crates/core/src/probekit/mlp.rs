//! One-hidden-layer perceptron with ReLU units and a softmax output.

use rand::Rng;

use super::data::{argmax, softmax_in_place, Samples, Standardizer};
use super::optim::Adam;
use crate::rng::{fisher_yates, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpShape {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
}

impl MlpShape {
    /// Parameter layout: `W1 (hidden × inputs)`, `b1`, `W2 (outputs × hidden)`, `b2`.
    pub fn size(&self) -> usize {
        self.hidden * self.inputs + self.hidden + self.outputs * self.hidden + self.outputs
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.inputs;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.outputs * self.hidden;
        (b1, w2, b2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    shape: MlpShape,
    params: Vec<f64>,
    standardizer: Standardizer,
}

fn forward(shape: MlpShape, params: &[f64], x: &[f64], hidden: &mut [f64], out: &mut [f64]) {
    let (b1, w2, b2) = shape.offsets();
    for (h, a) in hidden.iter_mut().enumerate() {
        let w = &params[h * shape.inputs..(h + 1) * shape.inputs];
        let v = params[b1 + h] + w.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
        *a = v.max(0.0);
    }
    for (c, o) in out.iter_mut().enumerate() {
        let w = &params[w2 + c * shape.hidden..w2 + (c + 1) * shape.hidden];
        *o = params[b2 + c] + w.iter().zip(hidden.iter()).map(|(p, q)| p * q).sum::<f64>();
    }
}

/// Mean cross-entropy over the rows `idx` plus `alpha/2 · (‖W1‖² + ‖W2‖²)`,
/// and its gradient.
pub fn loss_and_grad(shape: MlpShape, params: &[f64], s: &Samples, idx: &[usize], alpha: f64) -> (f64, Vec<f64>) {
    let (b1, w2, b2) = shape.offsets();
    let mut grad = vec![0.0; params.len()];
    let mut hidden = vec![0.0; shape.hidden];
    let mut out = vec![0.0; shape.outputs];
    let mut delta_h = vec![0.0; shape.hidden];
    let mut loss = 0.0;
    for &i in idx {
        let x = s.row(i);
        forward(shape, params, x, &mut hidden, &mut out);
        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + out.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - out[s.y[i]];
        softmax_in_place(&mut out);
        out[s.y[i]] -= 1.0;
        delta_h.iter_mut().for_each(|d| *d = 0.0);
        for (c, r) in out.iter().enumerate() {
            let row = w2 + c * shape.hidden;
            for h in 0..shape.hidden {
                grad[row + h] += r * hidden[h];
                delta_h[h] += r * params[row + h];
            }
            grad[b2 + c] += r;
        }
        for h in 0..shape.hidden {
            if hidden[h] <= 0.0 {
                continue;
            }
            let d = delta_h[h];
            let g = &mut grad[h * shape.inputs..(h + 1) * shape.inputs];
            for (gj, xj) in g.iter_mut().zip(x) {
                *gj += d * xj;
            }
            grad[b1 + h] += d;
        }
    }
    let n = idx.len() as f64;
    loss /= n;
    grad.iter_mut().for_each(|g| *g /= n);
    let penalised = (0..b1).chain(w2..b2);
    for j in penalised {
        loss += 0.5 * alpha * params[j] * params[j];
        grad[j] += alpha * params[j];
    }
    (loss, grad)
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(shape: MlpShape, rng: &mut StreamRng) -> Vec<f64> {
    let (b1, w2, b2) = shape.offsets();
    let mut p = vec![0.0; shape.size()];
    let l1 = (6.0 / (shape.inputs + shape.hidden) as f64).sqrt();
    for v in &mut p[..b1] {
        *v = rng.random_range(-l1..l1);
    }
    let l2 = (6.0 / (shape.hidden + shape.outputs) as f64).sqrt();
    for v in &mut p[w2..b2] {
        *v = rng.random_range(-l2..l2);
    }
    p
}

pub struct MlpTraining {
    pub hidden: usize,
    pub classes: usize,
    pub alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Mlp {
    pub fn fit(s: &Samples, cfg: &MlpTraining, rng: &mut StreamRng) -> Self {
        let standardizer = Standardizer::fit(s);
        let z = standardizer.transform(s);
        let shape = MlpShape {
            inputs: s.dim,
            hidden: cfg.hidden,
            outputs: cfg.classes,
        };
        let mut params = init_params(shape, rng);
        let mut opt = Adam::new(params.len(), cfg.learning_rate);
        let mut order: Vec<usize> = (0..z.len()).collect();
        for _ in 0..cfg.epochs {
            fisher_yates(&mut order, rng);
            for batch in order.chunks(cfg.batch_size.max(1)) {
                let (_, g) = loss_and_grad(shape, &params, &z, batch, cfg.alpha);
                opt.step(&mut params, &g);
            }
        }
        Self {
            shape,
            params,
            standardizer,
        }
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let mut row = vec![0.0; self.shape.inputs];
        self.standardizer.transform_row(x, &mut row);
        let mut hidden = vec![0.0; self.shape.hidden];
        let mut out = vec![0.0; self.shape.outputs];
        forward(self.shape, &self.params, &row, &mut hidden, &mut out);
        softmax_in_place(&mut out);
        out
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.probabilities(x))
    }
}
