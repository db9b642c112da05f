use serde::{Deserialize, Serialize};

use super::EvalError;

/// `counts[i][j]` = documents of true class `i` predicted as `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn from_predictions(
        truth: &[usize],
        predicted: &[usize],
        n_classes: usize,
    ) -> Result<Self, EvalError> {
        if truth.len() != predicted.len() {
            return Err(EvalError::LengthMismatch {
                truth: truth.len(),
                predicted: predicted.len(),
            });
        }
        let mut cm = Self::new(n_classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            cm.add(t, p)?;
        }
        Ok(cm)
    }

    pub fn add(&mut self, truth: usize, predicted: usize) -> Result<(), EvalError> {
        let n = self.n_classes;
        if truth >= n || predicted >= n {
            return Err(EvalError::LabelOutOfRange {
                label: truth.max(predicted),
                n_classes: n,
            });
        }
        self.counts[truth * n + predicted] += 1;
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n_classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn true_positives(&self, class: usize) -> u64 {
        self.get(class, class)
    }

    /// Predicted as `class` but belonging elsewhere.
    pub fn false_positives(&self, class: usize) -> u64 {
        (0..self.n_classes)
            .filter(|&t| t != class)
            .map(|t| self.get(t, class))
            .sum()
    }

    pub fn false_negatives(&self, class: usize) -> u64 {
        (0..self.n_classes)
            .filter(|&p| p != class)
            .map(|p| self.get(class, p))
            .sum()
    }

    /// Number of documents whose true class is `class`.
    pub fn support(&self, class: usize) -> u64 {
        (0..self.n_classes).map(|p| self.get(class, p)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub per_class: Vec<ClassMetrics>,
    /// Mean F1 over the classes that occur in the true labels.
    pub macro_f1: f64,
    pub micro_accuracy: f64,
    /// `1 - macro_f1`
    pub error: f64,
    pub train_seconds: f64,
    pub test_seconds: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricRecord, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyEvaluation);
    }
    let per_class: Vec<ClassMetrics> = (0..cm.n_classes())
        .map(|c| {
            let tp = cm.true_positives(c);
            let precision = ratio(tp, tp + cm.false_positives(c));
            let recall = ratio(tp, tp + cm.false_negatives(c));
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support: cm.support(c),
            }
        })
        .collect();
    let present: Vec<f64> = per_class
        .iter()
        .filter(|m| m.support > 0)
        .map(|m| m.f1)
        .collect();
    let macro_f1 = present.iter().sum::<f64>() / present.len() as f64;
    let correct: u64 = (0..cm.n_classes()).map(|c| cm.true_positives(c)).sum();
    Ok(MetricRecord {
        per_class,
        macro_f1,
        micro_accuracy: ratio(correct, total),
        error: 1.0 - macro_f1,
        train_seconds: 0.0,
        test_seconds: 0.0,
    })
}

/// `(err_ref - err_new) / err_ref`; positive means the new error is lower.
pub fn error_reduction(err_ref: f64, err_new: f64) -> Result<f64, EvalError> {
    if err_ref <= 0.0 || err_ref.is_nan() {
        return Err(EvalError::ZeroReferenceError(err_ref));
    }
    Ok((err_ref - err_new) / err_ref)
}

/// Unweighted mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(rows: &[&[u64]]) -> ConfusionMatrix {
        let n = rows.len();
        let mut m = ConfusionMatrix::new(n);
        for (i, r) in rows.iter().enumerate() {
            for (j, &c) in r.iter().enumerate() {
                for _ in 0..c {
                    m.add(i, j).unwrap();
                }
            }
        }
        m
    }

    #[test]
    fn perfect_diagonal() {
        let r = compute_metrics(&cm(&[&[3, 0], &[0, 4]])).unwrap();
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!(r.micro_accuracy, 1.0);
        assert_eq!(r.error, 0.0);
    }

    #[test]
    fn two_class_worked_values() {
        let r = compute_metrics(&cm(&[&[5, 5], &[0, 10]])).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(close(r.per_class[0].precision, 1.0));
        assert!(close(r.per_class[1].precision, 10.0 / 15.0));
        assert!(close(r.per_class[0].recall, 0.5));
        assert!(close(r.per_class[1].recall, 1.0));
        assert!(close(r.per_class[0].f1, 2.0 / 3.0));
        assert!(close(r.per_class[1].f1, 0.8));
        assert!(close(r.macro_f1, (2.0 / 3.0 + 0.8) / 2.0));
        assert!((r.macro_f1 - 0.733).abs() < 1e-3);
        assert_eq!(r.micro_accuracy, 0.75);
    }

    #[test]
    fn absent_class_excluded_from_macro() {
        // class 2 never true, never predicted
        let r = compute_metrics(&cm(&[&[2, 0, 0], &[1, 1, 0], &[0, 0, 0]])).unwrap();
        assert_eq!(r.per_class[2].f1, 0.0);
        let expected = (r.per_class[0].f1 + r.per_class[1].f1) / 2.0;
        assert_eq!(r.macro_f1, expected);
    }

    #[test]
    fn empty_matrix_rejected() {
        assert!(matches!(
            compute_metrics(&ConfusionMatrix::new(3)),
            Err(EvalError::EmptyEvaluation)
        ));
    }

    #[test]
    fn error_reduction_values() {
        assert!((error_reduction(0.20, 0.15).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(error_reduction(0.3, 0.3).unwrap(), 0.0);
        assert!((error_reduction(0.10, 0.20).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(error_reduction(0.0, 0.1), Err(EvalError::ZeroReferenceError(_))));
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }
}
