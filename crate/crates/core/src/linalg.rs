//! Small dense kernels backing the truncated SVD: deterministic parallel Gram
//! products, Cholesky-QR orthonormalization and one-sided Jacobi SVD.

use rayon::prelude::*;

use crate::matrix::{DenseMatrix, SparseMatrix};

/// Rows per parallel work unit. Fixed so reductions do not depend on the
/// thread count.
const CHUNK_ROWS: usize = 256;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `CSR^T` as a new CSR matrix.
pub(crate) fn transpose(m: &SparseMatrix) -> SparseMatrix {
    let mut counts = vec![0usize; m.n_cols() + 1];
    for &c in m.indices() {
        counts[c as usize + 1] += 1;
    }
    for i in 0..m.n_cols() {
        counts[i + 1] += counts[i];
    }
    let mut next = counts.clone();
    let mut indices = vec![0u32; m.nnz()];
    let mut values = vec![0.0; m.nnz()];
    for r in 0..m.n_rows() {
        let (cols, vals) = m.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            let slot = &mut next[c as usize];
            indices[*slot] = r as u32;
            values[*slot] = v;
            *slot += 1;
        }
    }
    SparseMatrix::from_csr(m.n_rows(), counts, indices, values).expect("transpose keeps invariants")
}

/// `A * X` for sparse `A` (m x n) and row-major dense `X` (n x l).
pub(crate) fn spmm(a: &SparseMatrix, x: &DenseMatrix) -> DenseMatrix {
    let l = x.n_cols();
    let mut out = DenseMatrix::zeros(a.n_rows(), l);
    if l == 0 {
        return out;
    }
    out.as_mut_slice()
        .par_chunks_mut(l)
        .enumerate()
        .for_each(|(i, row)| {
            let (cols, vals) = a.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                for (o, xv) in row.iter_mut().zip(x.row(c as usize)) {
                    *o += v * xv;
                }
            }
        });
    out
}

/// `A * W` for row-major `A` (n x l) and small `W` (l x p).
pub(crate) fn matmul(a: &DenseMatrix, w: &DenseMatrix) -> DenseMatrix {
    let p = w.n_cols();
    let mut out = DenseMatrix::zeros(a.n_rows(), p);
    if p == 0 {
        return out;
    }
    out.as_mut_slice()
        .par_chunks_mut(p)
        .enumerate()
        .for_each(|(i, row)| {
            for (j, &aij) in a.row(i).iter().enumerate() {
                if aij != 0.0 {
                    for (o, wv) in row.iter_mut().zip(w.row(j)) {
                        *o += aij * wv;
                    }
                }
            }
        });
    out
}

/// `X^T X` (l x l), summed over fixed row chunks in chunk order.
pub(crate) fn gram(x: &DenseMatrix) -> DenseMatrix {
    let l = x.n_cols();
    if l == 0 || x.n_rows() == 0 {
        return DenseMatrix::zeros(l, l);
    }
    let partials: Vec<Vec<f64>> = x
        .as_slice()
        .par_chunks(CHUNK_ROWS * l)
        .map(|chunk| {
            let mut g = vec![0.0; l * l];
            for row in chunk.chunks_exact(l) {
                for i in 0..l {
                    let ri = row[i];
                    if ri == 0.0 {
                        continue;
                    }
                    for j in i..l {
                        g[i * l + j] += ri * row[j];
                    }
                }
            }
            g
        })
        .collect();
    let mut g = DenseMatrix::zeros(l, l);
    for p in partials {
        for (a, b) in g.as_mut_slice().iter_mut().zip(&p) {
            *a += b;
        }
    }
    for i in 0..l {
        for j in 0..i {
            let v = g.get(j, i);
            g.set(i, j, v);
        }
    }
    g
}

/// Upper-triangular `R` with `R^T R = G`, or `None` if `G` is not
/// numerically positive definite.
fn cholesky_upper(g: &DenseMatrix) -> Option<DenseMatrix> {
    let l = g.n_rows();
    let mut r = DenseMatrix::zeros(l, l);
    let scale = (0..l).map(|i| g.get(i, i)).fold(0.0, f64::max);
    for j in 0..l {
        let mut d = g.get(j, j);
        for k in 0..j {
            d -= r.get(k, j) * r.get(k, j);
        }
        if !(d > 1e-13 * scale) {
            return None;
        }
        let rjj = d.sqrt();
        r.set(j, j, rjj);
        for i in j + 1..l {
            let mut s = g.get(j, i);
            for k in 0..j {
                s -= r.get(k, j) * r.get(k, i);
            }
            r.set(j, i, s / rjj);
        }
    }
    Some(r)
}

/// `X <- X R^{-1}` row by row.
fn solve_right_upper(x: &mut DenseMatrix, r: &DenseMatrix) {
    let l = r.n_rows();
    x.as_mut_slice().par_chunks_mut(l).for_each(|row| {
        for j in 0..l {
            let mut s = row[j];
            for k in 0..j {
                s -= row[k] * r.get(k, j);
            }
            row[j] = s / r.get(j, j);
        }
    });
}

fn modified_gram_schmidt(x: &mut DenseMatrix) {
    let mut cols = to_columns(x);
    orthonormalize_columns(&mut cols, 0);
    *x = from_columns(x.n_rows(), &cols);
}

/// Orthonormalizes the columns of a tall matrix (CholeskyQR2, with modified
/// Gram-Schmidt as a fallback for rank-deficient input).
pub(crate) fn orthonormalize(x: &mut DenseMatrix) {
    for _ in 0..2 {
        match cholesky_upper(&gram(x)) {
            Some(r) => solve_right_upper(x, &r),
            None => {
                modified_gram_schmidt(x);
                return;
            }
        }
    }
}

pub(crate) fn to_columns(x: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..x.n_cols())
        .map(|j| (0..x.n_rows()).map(|i| x.get(i, j)).collect())
        .collect()
}

pub(crate) fn from_columns(n_rows: usize, cols: &[Vec<f64>]) -> DenseMatrix {
    DenseMatrix::from_fn(n_rows, cols.len(), |i, j| cols[j][i])
}

/// Orthonormalizes `cols[start..]` against all earlier columns (which must
/// already be orthonormal) with two passes of modified Gram-Schmidt. Columns
/// that vanish are replaced by the first unit vector not yet in the span.
pub(crate) fn orthonormalize_columns(cols: &mut [Vec<f64>], start: usize) {
    let n = cols.first().map_or(0, Vec::len);
    let mut next_unit = 0usize;
    for j in start..cols.len() {
        let original = dot(&cols[j], &cols[j]).sqrt();
        let mut attempt = 0;
        loop {
            for _ in 0..2 {
                for i in 0..j {
                    let (head, tail) = cols.split_at_mut(j);
                    let proj = dot(&head[i], &tail[0]);
                    for (t, h) in tail[0].iter_mut().zip(&head[i]) {
                        *t -= proj * h;
                    }
                }
            }
            let norm = dot(&cols[j], &cols[j]).sqrt();
            if norm > 1e-10 * original.max(1.0) && norm > 0.0 {
                for v in &mut cols[j] {
                    *v /= norm;
                }
                break;
            }
            attempt += 1;
            assert!(attempt <= n + 1, "cannot complete orthonormal basis");
            let e = next_unit % n.max(1);
            next_unit += 1;
            cols[j].iter_mut().for_each(|v| *v = 0.0);
            cols[j][e] = 1.0;
        }
    }
}

/// One-sided Jacobi SVD of the matrix whose columns are `cols` (all of equal
/// length). Returns `(sigma, v, w)` sorted by descending sigma, where `v[j]`
/// is the j-th right singular vector (length = number of columns) and `w[j]`
/// the corresponding column of `A V` (= `sigma_j u_j`).
pub(crate) fn jacobi_svd(mut cols: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let l = cols.len();
    let mut v: Vec<Vec<f64>> = (0..l)
        .map(|j| {
            let mut e = vec![0.0; l];
            e[j] = 1.0;
            e
        })
        .collect();
    let eps = 1e-15;
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..l {
            for q in p + 1..l {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));
    let sigma_sorted = order.iter().map(|&j| sigma[j]).collect();
    let v_sorted = order.iter().map(|&j| v[j].clone()).collect();
    let w_sorted = order.iter().map(|&j| cols[j].clone()).collect();
    (sigma_sorted, v_sorted, w_sorted)
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    for (a, b) in head[p].iter_mut().zip(tail[0].iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}
