//! Row-major matrix containers: a CSR sparse matrix for term-document weights
//! and a dense matrix for latent (post-SVD) coordinates.

use std::fmt::Write as _;

use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};

const SPARSE_MAGIC: &[u8; 4] = b"SPMX";
const DENSE_MAGIC: &[u8; 4] = b"DNMX";
const VERSION: u8 = 1;
/// Row limit of the triplet text format.
pub const MAX_TEXT_ROWS: usize = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("row {row}: column indices must be strictly increasing and < {n_cols}")]
    BadColumns { row: usize, n_cols: usize },
    #[error("row {row}, column {col}: stored weight must be finite and nonzero")]
    BadWeight { row: usize, col: u32 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("text triplet line {0}: {1}")]
    Text(usize, String),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// Sparse row-major matrix. Rows hold strictly increasing column indices and
/// never store an explicit zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseMatrix {
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn empty(n_cols: usize) -> Self {
        Self {
            n_cols,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from raw CSR arrays, validating every invariant.
    pub fn from_csr(
        n_cols: usize,
        indptr: Vec<usize>,
        indices: Vec<u32>,
        values: Vec<f64>,
    ) -> Result<Self, MatrixError> {
        let m = Self {
            n_cols,
            indptr,
            indices,
            values,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<(), MatrixError> {
        let nnz = self.indices.len();
        if self.indptr.first() != Some(&0)
            || self.indptr.last() != Some(&nnz)
            || self.values.len() != nnz
            || self.indptr.windows(2).any(|w| w[0] > w[1])
        {
            return Err(MatrixError::Decode(DecodeError::Invalid(
                "inconsistent row offsets".into(),
            )));
        }
        for row in 0..self.n_rows() {
            let (cols, vals) = self.row(row);
            let increasing = cols.windows(2).all(|w| w[0] < w[1]);
            if !increasing || cols.last().is_some_and(|&c| c as usize >= self.n_cols) {
                return Err(MatrixError::BadColumns {
                    row,
                    n_cols: self.n_cols,
                });
            }
            if let Some(i) = vals.iter().position(|v| !v.is_finite() || *v == 0.0) {
                return Err(MatrixError::BadWeight { row, col: cols[i] });
            }
        }
        Ok(())
    }

    /// Appends a row from `(column, weight)` pairs sorted by column. Zero
    /// weights are skipped.
    pub fn push_row(&mut self, entries: impl IntoIterator<Item = (u32, f64)>) {
        let start = *self.indptr.last().unwrap();
        for (c, v) in entries {
            debug_assert!((c as usize) < self.n_cols);
            if v != 0.0 {
                debug_assert!(self.indices.len() == start || self.indices.last() < Some(&c));
                self.indices.push(c);
                self.values.push(v);
            }
        }
        self.indptr.push(self.indices.len());
    }

    pub fn from_rows(n_cols: usize, rows: &[Vec<(u32, f64)>]) -> Self {
        let mut m = Self::empty(n_cols);
        for r in rows {
            m.push_row(r.iter().copied());
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Applies `f` to every stored value, dropping entries that become zero.
    pub fn map_values(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        let mut out = Self::empty(self.n_cols);
        for r in 0..self.n_rows() {
            let (cols, vals) = self.row(r);
            out.push_row(cols.iter().zip(vals).map(|(&c, &v)| (c, f(v))));
        }
        out
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut out = Self::empty(self.n_cols);
        for &r in rows {
            let (cols, vals) = self.row(r);
            out.push_row(cols.iter().copied().zip(vals.iter().copied()));
        }
        out
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n_rows(), self.n_cols);
        for r in 0..self.n_rows() {
            let (cols, vals) = self.row(r);
            let row = d.row_mut(r);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c as usize] = v;
            }
        }
        d
    }

    /// Binary container: magic `SPMX`, version, `n_rows`, `n_cols`, `nnz`
    /// (u64), row offsets (u64 x n_rows+1), columns (u32 x nnz), weights
    /// (f64 x nnz). Little-endian throughout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(SPARSE_MAGIC, VERSION);
        w.u64(self.n_rows() as u64);
        w.u64(self.n_cols as u64);
        w.u64(self.nnz() as u64);
        for &p in &self.indptr {
            w.u64(p as u64);
        }
        for &c in &self.indices {
            w.u32(c);
        }
        for &v in &self.values {
            w.f64(v);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MatrixError> {
        let mut r = Reader::open(bytes, SPARSE_MAGIC, VERSION)?;
        let n_rows = r.u64("n_rows")?;
        let n_cols = r.u64("n_cols")?;
        let nnz = r.u64("nnz")?;
        let n_cols = usize::try_from(n_cols)
            .ok()
            .filter(|&c| c <= u32::MAX as usize + 1)
            .ok_or_else(|| DecodeError::Invalid("n_cols too large".into()))?;
        let rows_plus_one = n_rows
            .checked_add(1)
            .ok_or_else(|| DecodeError::Invalid("n_rows overflows".into()))?;
        let rows_plus_one = r.check_len(rows_plus_one, "row offsets", 8)?;
        let indptr = r.u64_vec(rows_plus_one, "row offsets")?;
        let nnz = r.check_len(nnz, "columns", 12)?;
        let indices = r.u32_vec(nnz, "columns")?;
        let values = r.f64_vec(nnz, "weights")?;
        r.finish()?;
        let indptr = indptr
            .into_iter()
            .map(|p| usize::try_from(p).map_err(|_| DecodeError::Invalid("offset".into())))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_csr(n_cols, indptr, indices, values)
    }

    /// Debug text format: a `# n_rows n_cols` header, then `row col weight`
    /// per stored entry. At most [`MAX_TEXT_ROWS`] rows.
    pub fn to_triplets(&self) -> String {
        let mut s = format!("# {} {}\n", self.n_rows(), self.n_cols);
        for r in 0..self.n_rows() {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                let _ = writeln!(s, "{r} {c} {v:e}");
            }
        }
        s
    }

    pub fn from_triplets(text: &str) -> Result<Self, MatrixError> {
        let mut lines = text.lines().enumerate();
        let (n_rows, n_cols) = lines
            .next()
            .and_then(|(_, l)| {
                let mut it = l.strip_prefix('#')?.split_whitespace();
                let r = it.next()?.parse::<usize>().ok()?;
                let c = it.next()?.parse::<usize>().ok()?;
                Some((r, c))
            })
            .ok_or_else(|| MatrixError::Text(1, "expected `# n_rows n_cols` header".into()))?;
        if n_rows > MAX_TEXT_ROWS || n_cols > u32::MAX as usize + 1 {
            return Err(MatrixError::Text(1, format!("dimensions {n_rows} x {n_cols} too large")));
        }
        let mut entries: Vec<(usize, u32, f64)> = Vec::new();
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = || MatrixError::Text(i + 1, format!("cannot parse `{line}`"));
            let mut it = line.split_whitespace();
            let r: usize = it.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
            let c: u32 = it.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
            let v: f64 = it.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
            if it.next().is_some() || r >= n_rows {
                return Err(bad());
            }
            entries.push((r, c, v));
        }
        // stable, so entries keep their file order within a row
        entries.sort_by_key(|e| e.0);
        let mut indptr = vec![0; n_rows + 1];
        for &(r, _, _) in &entries {
            indptr[r + 1] += 1;
        }
        for r in 0..n_rows {
            indptr[r + 1] += indptr[r];
        }
        let indices = entries.iter().map(|e| e.1).collect();
        let values = entries.iter().map(|e| e.2).collect();
        Self::from_csr(n_cols, indptr, indices, values)
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn from_vec(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self, MatrixError> {
        if data.len() != n_rows * n_cols {
            return Err(MatrixError::DimensionMismatch {
                expected: n_rows * n_cols,
                found: data.len(),
            });
        }
        Ok(Self {
            n_rows,
            n_cols,
            data,
        })
    }

    pub fn from_fn(n_rows: usize, n_cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for i in 0..n_rows {
            for j in 0..n_cols {
                data.push(f(i, j));
            }
        }
        Self {
            n_rows,
            n_cols,
            data,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n_cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n_cols, self.n_rows, |i, j| self.get(j, i))
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self {
            n_rows: rows.len(),
            n_cols: self.n_cols,
            data,
        }
    }

    pub fn map(&self, f: impl FnMut(f64) -> f64) -> Self {
        Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            data: self.data.iter().copied().map(f).collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(DENSE_MAGIC, VERSION);
        w.u64(self.n_rows as u64);
        w.u64(self.n_cols as u64);
        for &v in &self.data {
            w.f64(v);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MatrixError> {
        let mut r = Reader::open(bytes, DENSE_MAGIC, VERSION)?;
        let n_rows = r.u64("n_rows")?;
        let n_cols = r.u64("n_cols")?;
        let total = n_rows
            .checked_mul(n_cols)
            .ok_or_else(|| DecodeError::Invalid("dimensions overflow".into()))?;
        let total = r.check_len(total, "values", 8)?;
        let data = r.f64_vec(total, "values")?;
        r.finish()?;
        Ok(Self {
            n_rows: n_rows as usize,
            n_cols: n_cols as usize,
            data,
        })
    }
}

/// Borrowed view of one feature row.
#[derive(Debug, Clone, Copy)]
pub enum RowView<'a> {
    Sparse { indices: &'a [u32], values: &'a [f64] },
    Dense(&'a [f64]),
}

impl RowView<'_> {
    pub fn dot(&self, w: &[f64]) -> f64 {
        match *self {
            RowView::Sparse { indices, values } => indices
                .iter()
                .zip(values)
                .map(|(&c, &v)| v * w[c as usize])
                .sum(),
            RowView::Dense(x) => x.iter().zip(w).map(|(a, b)| a * b).sum(),
        }
    }

    /// `w += alpha * x`
    pub fn axpy(&self, alpha: f64, w: &mut [f64]) {
        match *self {
            RowView::Sparse { indices, values } => {
                for (&c, &v) in indices.iter().zip(values) {
                    w[c as usize] += alpha * v;
                }
            }
            RowView::Dense(x) => {
                for (wi, xi) in w.iter_mut().zip(x) {
                    *wi += alpha * xi;
                }
            }
        }
    }

    pub fn sq_norm(&self) -> f64 {
        match *self {
            RowView::Sparse { values, .. } => values.iter().map(|v| v * v).sum(),
            RowView::Dense(x) => x.iter().map(|v| v * v).sum(),
        }
    }
}

/// Classifier input: either sparse TF-IDF rows or dense latent rows.
#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    Sparse(SparseMatrix),
    Dense(DenseMatrix),
}

impl Features {
    pub fn n_rows(&self) -> usize {
        match self {
            Features::Sparse(m) => m.n_rows(),
            Features::Dense(m) => m.n_rows(),
        }
    }

    pub fn n_cols(&self) -> usize {
        match self {
            Features::Sparse(m) => m.n_cols(),
            Features::Dense(m) => m.n_cols(),
        }
    }

    pub fn row(&self, i: usize) -> RowView<'_> {
        match self {
            Features::Sparse(m) => {
                let (indices, values) = m.row(i);
                RowView::Sparse { indices, values }
            }
            Features::Dense(m) => RowView::Dense(m.row(i)),
        }
    }
}

impl From<SparseMatrix> for Features {
    fn from(m: SparseMatrix) -> Self {
        Features::Sparse(m)
    }
}

impl From<DenseMatrix> for Features {
    fn from(m: DenseMatrix) -> Self {
        Features::Dense(m)
    }
}
