//! Exact cosine k-nearest-neighbors.
//!
//! Neighbors are ranked by similarity (descending), then training-row index
//! (ascending). The vote picks the class with most neighbors, then the larger
//! summed similarity, then the smaller label id.
//!
//! [`knn_predict`] scores sparse rows through an inverted index and runs test
//! rows in parallel; [`knn_predict_exhaustive`] is the sequential pairwise
//! reference. Both accumulate every dot product in increasing column order,
//! so their similarities are bit-identical.

use rayon::prelude::*;

use super::{check_labels, cosine_from_parts, norm, row_dot, ClassifyError, Prediction};
use crate::codec::{DecodeError, Reader, Writer};
use crate::matrix::{DenseMatrix, Features, SparseMatrix};

const MAGIC: &[u8; 4] = b"KNNM";
const VERSION: u8 = 1;

#[derive(Debug, Clone)]
pub struct KnnModel {
    k: usize,
    n_classes: usize,
    train: Features,
    labels: Vec<usize>,
    norms: Vec<f64>,
    /// Sparse input only.
    postings: Option<Postings>,
}

/// Inverted index over the columns present in the training rows.
#[derive(Debug, Clone)]
struct Postings {
    /// Sorted distinct training columns.
    columns: Vec<u32>,
    /// Rank in `columns` -> (row, weight), rows ascending.
    by_column: SparseMatrix,
}

pub fn knn_fit(
    train: Features,
    labels: &[usize],
    n_classes: usize,
    k: usize,
) -> Result<KnnModel, ClassifyError> {
    if k == 0 {
        return Err(ClassifyError::InvalidK);
    }
    if train.n_rows() == 0 {
        return Err(ClassifyError::EmptyTrainingSet);
    }
    check_labels(train.n_rows(), labels, n_classes)?;
    let norms = (0..train.n_rows()).map(|i| norm(train.row(i))).collect();
    let postings = match &train {
        Features::Sparse(m) => {
            // postings cover only the columns that occur
            let mut columns = m.indices().to_vec();
            columns.sort_unstable();
            columns.dedup();
            let remapped = m
                .indices()
                .iter()
                .map(|c| columns.binary_search(c).expect("collected above") as u32)
                .collect();
            let compact = SparseMatrix::from_csr(
                columns.len(),
                m.indptr().to_vec(),
                remapped,
                m.values().to_vec(),
            )
            .expect("column ranks keep row order");
            Some(Postings {
                columns,
                by_column: crate::linalg::transpose(&compact),
            })
        }
        Features::Dense(_) => None,
    };
    Ok(KnnModel {
        k,
        n_classes,
        train,
        labels: labels.to_vec(),
        norms,
        postings,
    })
}

impl KnnModel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn train(&self) -> &Features {
        &self.train
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    fn check_width(&self, test: &Features) -> Result<(), ClassifyError> {
        if test.n_cols() != self.train.n_cols() {
            return Err(ClassifyError::DimensionMismatch {
                expected: self.train.n_cols(),
                found: test.n_cols(),
            });
        }
        Ok(())
    }

    /// Similarities of one test row against every training row.
    fn similarities(&self, test: &Features, i: usize) -> Vec<f64> {
        let row = test.row(i);
        let test_norm = norm(row);
        let n = self.train.n_rows();
        match (&self.postings, row) {
            (Some(post), crate::matrix::RowView::Sparse { indices, values }) => {
                let mut acc = vec![0.0; n];
                for (&c, &tv) in indices.iter().zip(values) {
                    let Ok(slot) = post.columns.binary_search(&c) else {
                        continue;
                    };
                    let (rows, weights) = post.by_column.row(slot);
                    for (&r, &w) in rows.iter().zip(weights) {
                        acc[r as usize] += tv * w;
                    }
                }
                acc.iter()
                    .zip(&self.norms)
                    .map(|(&d, &rn)| cosine_from_parts(d, test_norm, rn))
                    .collect()
            }
            _ => (0..n)
                .map(|r| cosine_from_parts(row_dot(row, self.train.row(r)), test_norm, self.norms[r]))
                .collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC, VERSION);
        w.u64(self.k as u64);
        w.u64(self.n_classes as u64);
        w.u64(self.labels.len() as u64);
        for &l in &self.labels {
            w.u64(l as u64);
        }
        let (tag, inner) = match &self.train {
            Features::Sparse(m) => (0u8, m.to_bytes()),
            Features::Dense(m) => (1u8, m.to_bytes()),
        };
        w.u8(tag);
        w.u64(inner.len() as u64);
        w.bytes(&inner);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ClassifyError> {
        let mut r = Reader::open(bytes, MAGIC, VERSION)?;
        let k = r.u64("k")? as usize;
        let n_classes = r.u64("n_classes")?;
        let n_classes = usize::try_from(n_classes)
            .map_err(|_| DecodeError::Invalid("n_classes".into()))?;
        let n = r.len("labels", 8)?;
        let labels: Vec<usize> = r.u64_vec(n, "labels")?.into_iter().map(|l| l as usize).collect();
        let tag = r.u8("feature tag")?;
        let len = r.len("features", 1)?;
        let inner = r.take(len, "features")?;
        r.finish()?;
        let train = match tag {
            0 => Features::Sparse(
                SparseMatrix::from_bytes(inner).map_err(|e| DecodeError::Invalid(e.to_string()))?,
            ),
            1 => Features::Dense(
                DenseMatrix::from_bytes(inner).map_err(|e| DecodeError::Invalid(e.to_string()))?,
            ),
            t => return Err(DecodeError::Invalid(format!("feature tag {t}")).into()),
        };
        knn_fit(train, &labels, n_classes, k)
    }
}

/// Indices of the `k` best neighbors in rank order.
fn top_k(sims: &[f64], k: usize) -> Vec<usize> {
    let rank = |a: &usize, b: &usize| sims[*b].total_cmp(&sims[*a]).then(a.cmp(b));
    let mut idx: Vec<usize> = (0..sims.len()).collect();
    let k = k.min(idx.len());
    if k < idx.len() {
        idx.select_nth_unstable_by(k, rank);
        idx.truncate(k);
    }
    idx.sort_unstable_by(rank);
    idx
}

fn vote(model: &KnnModel, sims: &[f64], neighbors: &[usize]) -> (usize, Vec<f64>) {
    let mut counts = vec![0usize; model.n_classes];
    let mut sums = vec![0.0; model.n_classes];
    for &r in neighbors {
        let l = model.labels[r];
        counts[l] += 1;
        sums[l] += sims[r];
    }
    let mut best = 0;
    for c in 1..model.n_classes {
        let better = counts[c] > counts[best] || (counts[c] == counts[best] && sums[c] > sums[best]);
        if better {
            best = c;
        }
    }
    let scores = counts.iter().map(|&c| c as f64).collect();
    (best, scores)
}

fn predict_row(model: &KnnModel, sims: &[f64]) -> (usize, Vec<f64>) {
    let neighbors = top_k(sims, model.k);
    vote(model, sims, &neighbors)
}

pub fn knn_predict(model: &KnnModel, test: &Features) -> Result<Prediction, ClassifyError> {
    model.check_width(test)?;
    let (labels, scores): (Vec<usize>, Vec<Vec<f64>>) = (0..test.n_rows())
        .into_par_iter()
        .map(|i| predict_row(model, &model.similarities(test, i)))
        .unzip();
    Ok(Prediction {
        labels,
        scores: Some(scores),
    })
}

/// Sequential pairwise reference for [`knn_predict`].
pub fn knn_predict_exhaustive(model: &KnnModel, test: &Features) -> Result<Prediction, ClassifyError> {
    model.check_width(test)?;
    let mut labels = Vec::with_capacity(test.n_rows());
    let mut scores = Vec::with_capacity(test.n_rows());
    for i in 0..test.n_rows() {
        let row = test.row(i);
        let sims: Vec<f64> = (0..model.train.n_rows())
            .map(|r| {
                let other = model.train.row(r);
                cosine_from_parts(row_dot(row, other), norm(row), norm(other))
            })
            .collect();
        let (l, s) = predict_row(model, &sims);
        labels.push(l);
        scores.push(s);
    }
    Ok(Prediction {
        labels,
        scores: Some(scores),
    })
}
