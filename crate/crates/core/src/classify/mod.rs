//! Cosine KNN (k = 1, 5), one-vs-rest L2 logistic regression and one-vs-rest
//! linear hinge-loss SVM.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::DecodeError;
use crate::matrix::{Features, RowView};

pub mod knn;
pub mod linear;

pub use knn::{knn_fit, knn_predict, knn_predict_exhaustive, KnnModel};
pub use linear::{linear_fit, linear_predict, FitReport, LinearConfig, LinearKind, LinearModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training data contains fewer than two classes")]
    SingleClassTraining,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{rows} feature rows but {labels} labels")]
    LabelCountMismatch { rows: usize, labels: usize },
    #[error("label {label} is outside 0..{n_classes}")]
    InvalidLabel { label: usize, n_classes: usize },
    #[error("k must be at least 1")]
    InvalidK,
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// Predicted label ids, optionally with per-class scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<usize>,
    pub scores: Option<Vec<Vec<f64>>>,
}

/// A single vector for [`cosine_similarity`].
#[derive(Debug, Clone, Copy)]
pub enum Vector<'a> {
    Sparse {
        dim: usize,
        indices: &'a [u32],
        values: &'a [f64],
    },
    Dense(&'a [f64]),
}

impl Vector<'_> {
    fn dim(&self) -> usize {
        match self {
            Vector::Sparse { dim, .. } => *dim,
            Vector::Dense(v) => v.len(),
        }
    }

    fn view(&self) -> RowView<'_> {
        match *self {
            Vector::Sparse { indices, values, .. } => RowView::Sparse { indices, values },
            Vector::Dense(v) => RowView::Dense(v),
        }
    }
}

/// Euclidean norm, summed in storage order.
pub(crate) fn norm(v: RowView<'_>) -> f64 {
    v.sq_norm().sqrt()
}

/// Dot product summed in increasing column order.
pub(crate) fn row_dot(u: RowView<'_>, v: RowView<'_>) -> f64 {
    match (u, v) {
        (
            RowView::Sparse { indices: ui, values: uv },
            RowView::Sparse { indices: vi, values: vv },
        ) => {
            let (mut a, mut b, mut s) = (0, 0, 0.0);
            while a < ui.len() && b < vi.len() {
                match ui[a].cmp(&vi[b]) {
                    std::cmp::Ordering::Less => a += 1,
                    std::cmp::Ordering::Greater => b += 1,
                    std::cmp::Ordering::Equal => {
                        s += uv[a] * vv[b];
                        a += 1;
                        b += 1;
                    }
                }
            }
            s
        }
        (RowView::Dense(x), RowView::Dense(y)) => x.iter().zip(y).map(|(a, b)| a * b).sum(),
        (RowView::Sparse { indices, values }, RowView::Dense(d))
        | (RowView::Dense(d), RowView::Sparse { indices, values }) => indices
            .iter()
            .zip(values)
            .map(|(&c, &x)| x * d[c as usize])
            .sum(),
    }
}

/// Combines a dot product with two norms; zero when either norm is zero.
pub(crate) fn cosine_from_parts(dot: f64, norm_u: f64, norm_v: f64) -> f64 {
    if norm_u == 0.0 || norm_v == 0.0 {
        0.0
    } else {
        (dot / (norm_u * norm_v)).clamp(-1.0, 1.0)
    }
}

pub fn cosine_similarity(u: Vector<'_>, v: Vector<'_>) -> Result<f64, ClassifyError> {
    if u.dim() != v.dim() {
        return Err(ClassifyError::DimensionMismatch {
            expected: u.dim(),
            found: v.dim(),
        });
    }
    let (uv, vv) = (u.view(), v.view());
    Ok(cosine_from_parts(row_dot(uv, vv), norm(uv), norm(vv)))
}

/// The four classifiers under study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    Knn1,
    Knn5,
    Logistic,
    Svm,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 4] = [Self::Knn1, Self::Knn5, Self::Logistic, Self::Svm];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Knn1 => "knn1",
            Self::Knn5 => "knn5",
            Self::Logistic => "logistic",
            Self::Svm => "svm",
        }
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "knn1" => Ok(Self::Knn1),
            "knn5" => Ok(Self::Knn5),
            "logistic" | "lr" => Ok(Self::Logistic),
            "svm" => Ok(Self::Svm),
            _ => Err(format!("unknown classifier `{s}` (knn1, knn5, logistic, svm)")),
        }
    }
}

/// A fitted classifier of any kind.
#[derive(Debug, Clone)]
pub enum Model {
    Knn(KnnModel),
    Linear(LinearModel),
}

impl Model {
    pub fn fit(
        kind: ClassifierKind,
        train: Features,
        labels: &[usize],
        n_classes: usize,
        lambda: f64,
        class_weighting: bool,
        seed: u64,
    ) -> Result<(Self, Option<FitReport>), ClassifyError> {
        match kind {
            ClassifierKind::Knn1 | ClassifierKind::Knn5 => {
                let k = if kind == ClassifierKind::Knn1 { 1 } else { 5 };
                Ok((Model::Knn(knn_fit(train, labels, n_classes, k)?), None))
            }
            ClassifierKind::Logistic | ClassifierKind::Svm => {
                let config = LinearConfig {
                    kind: if kind == ClassifierKind::Logistic {
                        LinearKind::Logistic
                    } else {
                        LinearKind::Svm
                    },
                    lambda,
                    class_weighting,
                    seed,
                    ..LinearConfig::default()
                };
                let (model, report) = linear_fit(&train, labels, n_classes, &config)?;
                Ok((Model::Linear(model), Some(report)))
            }
        }
    }

    pub fn predict(&self, test: &Features) -> Result<Prediction, ClassifyError> {
        match self {
            Model::Knn(m) => knn_predict(m, test),
            Model::Linear(m) => linear_predict(m, test),
        }
    }
}

pub(crate) fn check_labels(
    rows: usize,
    labels: &[usize],
    n_classes: usize,
) -> Result<(), ClassifyError> {
    if rows != labels.len() {
        return Err(ClassifyError::LabelCountMismatch {
            rows,
            labels: labels.len(),
        });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(ClassifyError::InvalidLabel { label, n_classes });
    }
    Ok(())
}
