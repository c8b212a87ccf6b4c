use crate::datamodel::Split;

/// Row-major training matrix with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub dim: usize,
    pub x: Vec<f64>,
    pub y: Vec<usize>,
}

impl Samples {
    pub fn new(dim: usize, x: Vec<f64>, y: Vec<usize>) -> Self {
        assert_eq!(x.len(), dim * y.len(), "sample matrix shape");
        Self { dim, x, y }
    }

    pub fn from_split(split: &Split, dim: usize) -> Self {
        Self {
            dim,
            x: split.vectors.iter().map(|&v| f64::from(v)).collect(),
            y: split.labels.iter().map(|&l| l as usize).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self, idx: &[usize]) -> Samples {
        let mut x = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            x.extend_from_slice(self.row(i));
        }
        Samples {
            dim: self.dim,
            x,
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }

    pub fn distinct_classes(&self) -> usize {
        let mut seen: Vec<usize> = self.y.clone();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }
}

/// Per-feature z-scoring fitted on training data. Constant features keep
/// unit scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(s: &Samples) -> Self {
        let n = s.len().max(1) as f64;
        let mut mean = vec![0.0; s.dim];
        for i in 0..s.len() {
            for (m, v) in mean.iter_mut().zip(s.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; s.dim];
        for i in 0..s.len() {
            for ((acc, v), m) in var.iter_mut().zip(s.row(i)).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn transform_row(&self, row: &[f64], out: &mut [f64]) {
        for (((o, v), m), s) in out.iter_mut().zip(row).zip(&self.mean).zip(&self.scale) {
            *o = (v - m) / s;
        }
    }

    pub fn transform(&self, s: &Samples) -> Samples {
        let mut x = vec![0.0; s.x.len()];
        for i in 0..s.len() {
            self.transform_row(s.row(i), &mut x[i * s.dim..(i + 1) * s.dim]);
        }
        Samples {
            dim: s.dim,
            x,
            y: s.y.clone(),
        }
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let mut out = z.to_vec();
    softmax_in_place(&mut out);
    out
}

pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}
