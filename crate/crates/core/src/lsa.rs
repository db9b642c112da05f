//! Truncated SVD of the document x term matrix and projection into the
//! k-dimensional latent space.
//!
//! Small inputs go through a dense one-sided Jacobi SVD. Larger ones use
//! block subspace iteration on `A^T A` with a Rayleigh-Ritz step every
//! iteration, stopping once the leading `k` Ritz values settle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::linalg;
use crate::matrix::{DenseMatrix, SparseMatrix};

const MAGIC: &[u8; 4] = b"SVDM";
const VERSION: u8 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LsaError {
    #[error("rank {k} must be in 1..={max}")]
    RankTooLarge { k: usize, max: usize },
    #[error("subspace iteration did not converge after {0} iterations")]
    ConvergenceFailure(usize),
    #[error("dimension mismatch: model has {expected} columns, input has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvdOptions {
    /// Relative change of each leading singular value between iterations.
    pub tol: f64,
    pub max_iter: usize,
    /// Use the dense solver when `min(m, n)` is at most this and `max(m, n)`
    /// at most `dense_max_dim`.
    pub dense_min_dim: usize,
    pub dense_max_dim: usize,
    pub seed: u64,
}

impl Default for SvdOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 1000,
            dense_min_dim: 500,
            dense_max_dim: 20_000,
            seed: 0x5eed_5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvdModel {
    singular_values: Vec<f64>,
    /// k x n_cols, orthonormal rows.
    components: DenseMatrix,
    /// n_cols x k, kept for row-wise projection.
    components_t: DenseMatrix,
    vocabulary_hash: u64,
    iterations: usize,
}

impl SvdModel {
    fn new(singular_values: Vec<f64>, components: DenseMatrix, iterations: usize) -> Self {
        let components_t = components.transpose();
        Self {
            singular_values,
            components,
            components_t,
            vocabulary_hash: 0,
            iterations,
        }
    }

    pub fn k(&self) -> usize {
        self.singular_values.len()
    }

    pub fn n_cols(&self) -> usize {
        self.components.n_cols()
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn components(&self) -> &DenseMatrix {
        &self.components
    }

    /// Solver iterations (Jacobi sweeps are not counted; 0 for the dense path).
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn vocabulary_hash(&self) -> u64 {
        self.vocabulary_hash
    }

    pub fn with_vocabulary_hash(mut self, hash: u64) -> Self {
        self.vocabulary_hash = hash;
        self
    }

    /// Row `i` of the result is `docs_i . V_k^T`.
    pub fn project(&self, docs: &SparseMatrix) -> Result<DenseMatrix, LsaError> {
        if docs.n_cols() != self.n_cols() {
            return Err(LsaError::DimensionMismatch {
                expected: self.n_cols(),
                found: docs.n_cols(),
            });
        }
        Ok(linalg::spmm(docs, &self.components_t))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC, VERSION);
        w.u64(self.k() as u64);
        w.u64(self.n_cols() as u64);
        w.u64(self.vocabulary_hash);
        for &s in &self.singular_values {
            w.f64(s);
        }
        for &v in self.components.as_slice() {
            w.f64(v);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LsaError> {
        let mut r = Reader::open(bytes, MAGIC, VERSION)?;
        let k = r.u64("k")?;
        let n_cols = r.u64("n_cols")?;
        let hash = r.u64("vocabulary hash")?;
        let k = r.check_len(k, "singular values", 8)?;
        let sigma = r.f64_vec(k, "singular values")?;
        let total = (k as u64)
            .checked_mul(n_cols)
            .ok_or_else(|| DecodeError::Invalid("dimensions overflow".into()))?;
        let total = r.check_len(total, "components", 8)?;
        let comps = r.f64_vec(total, "components")?;
        r.finish()?;
        if sigma.iter().any(|s| !(*s >= 0.0)) || sigma.windows(2).any(|w| w[0] < w[1]) {
            return Err(DecodeError::Invalid("singular values must be sorted and >= 0".into()).into());
        }
        let components = DenseMatrix::from_vec(k, n_cols as usize, comps)
            .map_err(|e| DecodeError::Invalid(e.to_string()))?;
        Ok(Self::new(sigma, components, 0).with_vocabulary_hash(hash))
    }
}

pub fn fit_svd(train: &SparseMatrix, k: usize) -> Result<SvdModel, LsaError> {
    fit_svd_with(train, k, &SvdOptions::default())
}

pub fn fit_svd_with(train: &SparseMatrix, k: usize, opts: &SvdOptions) -> Result<SvdModel, LsaError> {
    let (m, n) = (train.n_rows(), train.n_cols());
    let max = m.min(n);
    if k == 0 || k > max {
        return Err(LsaError::RankTooLarge { k, max });
    }
    let mut model = if max <= opts.dense_min_dim && m.max(n) <= opts.dense_max_dim {
        dense_svd(train, k)
    } else {
        subspace_svd(train, k, opts)?
    };
    canonicalize_signs(&mut model);
    Ok(model)
}

fn dense_svd(a: &SparseMatrix, k: usize) -> SvdModel {
    let (m, n) = (a.n_rows(), a.n_cols());
    let dense = a.to_dense();
    let (sigma, comps) = if n <= m {
        // columns are terms: V comes straight out of the rotations
        let (sigma, v, _) = linalg::jacobi_svd(linalg::to_columns(&dense));
        (sigma, v)
    } else {
        // columns are documents: A^T u_j = sigma_j v_j
        let cols = (0..m).map(|i| dense.row(i).to_vec()).collect();
        let (sigma, _, w) = linalg::jacobi_svd(cols);
        let cutoff = sigma[0] * 1e-13 * n as f64;
        let mut comps: Vec<Vec<f64>> = w
            .into_iter()
            .zip(&sigma)
            .map(|(col, &s)| {
                if s > cutoff && s > 0.0 {
                    col.into_iter().map(|x| x / s).collect()
                } else {
                    vec![0.0; n]
                }
            })
            .collect();
        comps.truncate(k);
        linalg::orthonormalize_columns(&mut comps, 0);
        (sigma, comps)
    };
    let sigma = sigma[..k].to_vec();
    let components = DenseMatrix::from_fn(k, n, |i, j| comps[i][j]);
    SvdModel::new(sigma, components, 0)
}

fn subspace_svd(a: &SparseMatrix, k: usize, opts: &SvdOptions) -> Result<SvdModel, LsaError> {
    let (m, n) = (a.n_rows(), a.n_cols());
    let block = (k + (k / 2).clamp(10, 100)).min(m.min(n));
    let at = linalg::transpose(a);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v = DenseMatrix::from_fn(n, block, |_, _| rng.random_range(-1.0..1.0));
    linalg::orthonormalize(&mut v);
    let mut prev: Option<Vec<f64>> = None;
    for iter in 1..=opts.max_iter {
        // Rayleigh-Ritz on span(V): B = A V = U_B diag(sigma) W^T
        let b = linalg::spmm(a, &v);
        let (sigma, w_cols, _) = linalg::jacobi_svd(linalg::to_columns(&b));
        let w = linalg::from_columns(block, &w_cols);
        let v_ritz = linalg::matmul(&v, &w);
        let converged = prev.as_ref().is_some_and(|p| {
            (0..k).all(|i| (sigma[i] - p[i]).abs() <= opts.tol * sigma[i].max(f64::MIN_POSITIVE))
        });
        if converged {
            let components = DenseMatrix::from_fn(k, n, |i, j| v_ritz.get(j, i));
            return Ok(SvdModel::new(sigma[..k].to_vec(), components, iter));
        }
        prev = Some(sigma);
        // V <- orth(A^T A V_ritz)
        let av = linalg::spmm(a, &v_ritz);
        v = linalg::spmm(&at, &av);
        linalg::orthonormalize(&mut v);
    }
    Err(LsaError::ConvergenceFailure(opts.max_iter))
}

/// Flips each component so its largest-magnitude entry is non-negative.
fn canonicalize_signs(model: &mut SvdModel) {
    let n = model.n_cols();
    let k = model.k();
    let flips: Vec<bool> = (0..k)
        .into_par_iter()
        .map(|i| {
            let row = model.components.row(i);
            let mut best = 0usize;
            for j in 1..n {
                if row[j].abs() > row[best].abs() {
                    best = j;
                }
            }
            n > 0 && row[best] < 0.0
        })
        .collect();
    for (i, flip) in flips.into_iter().enumerate() {
        if flip {
            model.components.row_mut(i).iter_mut().for_each(|x| *x = -*x);
        }
    }
    model.components_t = model.components.transpose();
}
