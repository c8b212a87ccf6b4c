//! CART trees with Gini impurity, and bagged forests of them.

use rand::Rng;

use super::data::Samples;
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features examined per split; `None` examines all, in index order.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_leaf: 1,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(usize),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    score: f64,
}

fn majority(s: &Samples, idx: &[usize], classes: usize) -> (usize, bool) {
    let mut counts = vec![0usize; classes];
    for &i in idx {
        counts[s.y[i]] += 1;
    }
    let mut best = 0;
    for c in 1..classes {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    (best, pure)
}

/// Best threshold on one feature, scored by `Σ_side (n_side − Σ_c n_c²/n_side)`,
/// which is the size-weighted Gini impurity times the node size.
fn best_threshold(s: &Samples, idx: &[usize], feature: usize, classes: usize, min_leaf: usize, sorted: &mut Vec<(f64, usize)>) -> Option<(f64, f64)> {
    sorted.clear();
    sorted.extend(idx.iter().map(|&i| (s.x[i * s.dim + feature], s.y[i])));
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = sorted.len();
    if sorted[0].0 == sorted[n - 1].0 {
        return None;
    }
    let mut right = vec![0usize; classes];
    for &(_, y) in sorted.iter() {
        right[y] += 1;
    }
    let mut left = vec![0usize; classes];
    let mut left_sq: f64 = 0.0;
    let mut right_sq: f64 = right.iter().map(|&c| (c * c) as f64).sum();
    let mut best: Option<(f64, f64)> = None;
    for k in 0..n - 1 {
        let y = sorted[k].1;
        left_sq += (2 * left[y] + 1) as f64;
        right_sq -= (2 * right[y] - 1) as f64;
        left[y] += 1;
        right[y] -= 1;
        let nl = k + 1;
        let nr = n - nl;
        if sorted[k].0 == sorted[k + 1].0 || nl < min_leaf || nr < min_leaf {
            continue;
        }
        let score = (nl as f64 - left_sq / nl as f64) + (nr as f64 - right_sq / nr as f64);
        if best.is_none_or(|(b, _)| score < b) {
            let (lo, hi) = (sorted[k].0, sorted[k + 1].0);
            let mid = lo + (hi - lo) / 2.0;
            let threshold = if mid < hi { mid } else { lo };
            best = Some((score, threshold));
        }
    }
    best
}

impl DecisionTree {
    /// Grows a tree on the rows `idx`. The generator is used only for
    /// per-split feature subsampling.
    pub fn fit_rows(s: &Samples, idx: Vec<usize>, classes: usize, params: TreeParams, mut rng: Option<&mut StreamRng>) -> Self {
        let mut nodes = vec![Node::Leaf(0)];
        let mut stack = vec![(0usize, idx, 0usize)];
        let mut sorted = Vec::new();
        let mut order: Vec<usize> = (0..s.dim).collect();
        while let Some((node, rows, depth)) = stack.pop() {
            let (label, pure) = majority(s, &rows, classes);
            nodes[node] = Node::Leaf(label);
            if pure || params.max_depth.is_some_and(|d| depth >= d) || rows.len() < 2 * params.min_leaf.max(1) {
                continue;
            }
            let limit = match (params.max_features, rng.as_deref_mut()) {
                (Some(m), Some(r)) if m < s.dim => {
                    // lazily shuffled candidate order; keep scanning past `m` until a valid split appears
                    for i in 0..s.dim {
                        let j = r.random_range(i..s.dim);
                        order.swap(i, j);
                    }
                    m
                }
                _ => {
                    for (i, o) in order.iter_mut().enumerate() {
                        *o = i;
                    }
                    s.dim
                }
            };
            let mut choice: Option<SplitChoice> = None;
            for (examined, &f) in order.iter().enumerate() {
                if examined >= limit && choice.is_some() {
                    break;
                }
                if let Some((score, threshold)) = best_threshold(s, &rows, f, classes, params.min_leaf.max(1), &mut sorted) {
                    if choice.as_ref().is_none_or(|c| score < c.score) {
                        choice = Some(SplitChoice {
                            feature: f,
                            threshold,
                            score,
                        });
                    }
                }
            }
            let Some(c) = choice else { continue };
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| s.x[i * s.dim + c.feature] <= c.threshold);
            let left = nodes.len();
            nodes.push(Node::Leaf(0));
            let right = nodes.len();
            nodes.push(Node::Leaf(0));
            nodes[node] = Node::Split {
                feature: c.feature,
                threshold: c.threshold,
                left,
                right,
            };
            stack.push((right, r, depth + 1));
            stack.push((left, l, depth + 1));
        }
        Self { nodes }
    }

    pub fn fit(s: &Samples, classes: usize, params: TreeParams) -> Self {
        Self::fit_rows(s, (0..s.len()).collect(), classes, params, None)
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(c) => return c,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub trees: usize,
    pub bootstrap: bool,
    pub tree: TreeParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    classes: usize,
    trees: Vec<DecisionTree>,
}

impl RandomForest {
    pub fn fit(s: &Samples, classes: usize, params: ForestParams, rng: &mut StreamRng) -> Self {
        let trees = (0..params.trees)
            .map(|_| {
                let rows: Vec<usize> = if params.bootstrap {
                    (0..s.len()).map(|_| rng.random_range(0..s.len())).collect()
                } else {
                    (0..s.len()).collect()
                };
                DecisionTree::fit_rows(s, rows, classes, params.tree, Some(&mut *rng))
            })
            .collect();
        Self { classes, trees }
    }

    /// Majority vote; the lowest class wins ties.
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut votes = vec![0usize; self.classes];
        for t in &self.trees {
            votes[t.predict(x)] += 1;
        }
        let mut best = 0;
        for c in 1..self.classes {
            if votes[c] > votes[best] {
                best = c;
            }
        }
        best
    }
}
