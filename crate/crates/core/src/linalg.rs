//! Dense row-major matrices and the rank-revealing least-squares solver.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data has wrong length");
        Self { rows, cols, data }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix::from_row_major(idx.len(), self.cols, data)
    }

    pub fn select_columns(&self, idx: &[usize]) -> Matrix {
        Matrix::from_fn(self.rows, idx.len(), |i, j| self.get(i, idx[j]))
    }

    /// `[self | 1]`: appends a column of ones.
    pub fn with_bias(&self) -> Matrix {
        Matrix::from_fn(self.rows, self.cols + 1, |i, j| {
            if j < self.cols {
                self.get(i, j)
            } else {
                1.0
            }
        })
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `selfᵀ v`
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimum-norm least-squares solution of `a x ≈ b` with its numerical rank.
///
/// Householder QR with column pivoting determines the rank; rank-deficient
/// systems go through a complete orthogonal decomposition so the returned
/// solution is the minimum-norm minimiser.
pub fn lstsq_min_norm(a: &Matrix, b: &[f64]) -> (Vec<f64>, usize) {
    let (m, n) = (a.rows(), a.cols());
    assert_eq!(b.len(), m);
    if n == 0 {
        return (Vec::new(), 0);
    }
    // column-major working copy
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut qtb = b.to_vec();
    let steps = m.min(n);
    let mut diag = Vec::with_capacity(steps);

    for j in 0..steps {
        let (p, _) = (j..n)
            .map(|c| (c, cols[c][j..].iter().map(|v| v * v).sum::<f64>()))
            .fold((j, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        cols.swap(j, p);
        perm.swap(j, p);

        let x = &cols[j][j..];
        let alpha = norm2(x);
        if alpha == 0.0 {
            diag.push(0.0);
            break;
        }
        let alpha = if x[0] > 0.0 { -alpha } else { alpha };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vnorm2 = dot(&v, &v);
        if vnorm2 > 0.0 {
            let beta = 2.0 / vnorm2;
            for c in cols.iter_mut().skip(j + 1) {
                let s = beta * dot(&v, &c[j..]);
                for (ci, vi) in c[j..].iter_mut().zip(&v) {
                    *ci -= s * vi;
                }
            }
            let s = beta * dot(&v, &qtb[j..]);
            for (bi, vi) in qtb[j..].iter_mut().zip(&v) {
                *bi -= s * vi;
            }
        }
        cols[j][j] = alpha;
        for ci in cols[j][j + 1..].iter_mut() {
            *ci = 0.0;
        }
        diag.push(alpha);
    }

    let tol = f64::EPSILON * m.max(n) as f64 * diag.first().map_or(0.0, |d| d.abs());
    let rank = diag.iter().take_while(|d| d.abs() > tol).count();

    // R is stored in cols[c][r] for r <= c, r < rank.
    let r_at = |r: usize, c: usize| cols[c][r];
    let mut z = vec![0.0; n];
    if rank == n {
        for i in (0..n).rev() {
            let mut s = qtb[i];
            for c in i + 1..n {
                s -= r_at(i, c) * z[c];
            }
            z[i] = s / r_at(i, i);
        }
    } else if rank > 0 {
        // Rᵀ (n × rank) = Q2 T, then T^T w = c and z = Q2 [w; 0].
        let mut rt: Vec<Vec<f64>> = (0..rank)
            .map(|r| (0..n).map(|c| if c >= r { r_at(r, c) } else { 0.0 }).collect())
            .collect();
        let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(rank);
        for j in 0..rank {
            let x = &rt[j][j..];
            let alpha = norm2(x);
            let alpha = if x[0] > 0.0 { -alpha } else { alpha };
            let mut v = x.to_vec();
            v[0] -= alpha;
            let vnorm2 = dot(&v, &v);
            if vnorm2 > 0.0 {
                let beta = 2.0 / vnorm2;
                for c in rt.iter_mut().skip(j + 1) {
                    let s = beta * dot(&v, &c[j..]);
                    for (ci, vi) in c[j..].iter_mut().zip(&v) {
                        *ci -= s * vi;
                    }
                }
            }
            rt[j][j] = alpha;
            reflectors.push(v);
        }
        // T is upper triangular with T[i][c] = rt[c][i]; solve Tᵀ w = c.
        let mut w = vec![0.0; rank];
        for i in 0..rank {
            let mut s = qtb[i];
            for (k, wk) in w.iter().enumerate().take(i) {
                s -= rt[i][k] * wk;
            }
            w[i] = s / rt[i][i];
        }
        z[..rank].copy_from_slice(&w);
        for j in (0..rank).rev() {
            let v = &reflectors[j];
            let vnorm2 = dot(v, v);
            if vnorm2 > 0.0 {
                let s = 2.0 / vnorm2 * dot(v, &z[j..]);
                for (zi, vi) in z[j..].iter_mut().zip(v) {
                    *zi -= s * vi;
                }
            }
        }
    }

    let mut x = vec![0.0; n];
    for (i, &p) in perm.iter().enumerate() {
        x[p] = z[i];
    }
    (x, rank)
}

/// Solves the symmetric positive-definite system `a x = b` in place by
/// Cholesky factorisation. `a` is `n × n` row-major. Returns `None` when a
/// pivot falls below `rel_tol` times the largest diagonal entry.
pub fn cholesky_solve(a: &mut [f64], b: &mut [f64], n: usize, rel_tol: f64) -> Option<()> {
    let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0_f64, f64::max);
    if !(max_diag > 0.0) {
        return None;
    }
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > rel_tol * max_diag) {
            return None;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    Some(())
}
