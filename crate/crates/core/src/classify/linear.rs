//! One-vs-rest linear classifiers.
//!
//! For each class `c` with labels `y_i in {-1, +1}` the solver minimizes
//!
//! ```text
//! (lambda / 2) |w|^2 + sum_i omega_i * loss(y_i * (w . x_i + b))
//! ```
//!
//! with `omega_i = (sum_j n_j) / n_{class(i)}` when class weighting is on.
//! Logistic regression (`log(1 + e^-z)`) uses L-BFGS with an Armijo line
//! search and an unregularized bias. The hinge-loss SVM (`max(0, 1 - z)`)
//! uses dual coordinate descent; its bias is an extra constant feature and is
//! therefore regularized together with `w`.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_labels, ClassifyError, Prediction};
use crate::codec::{DecodeError, Reader, Writer};
use crate::matrix::{DenseMatrix, Features};

const MAGIC: &[u8; 4] = b"LINM";
const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearKind {
    Logistic,
    Svm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearConfig {
    pub kind: LinearKind,
    pub lambda: f64,
    pub class_weighting: bool,
    /// L-BFGS iterations or coordinate-descent epochs per class.
    pub max_iter: usize,
    /// Logistic: gradient norm relative to the initial one.
    /// SVM: spread of the projected gradient.
    pub tol: f64,
    pub seed: u64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self {
            kind: LinearKind::Logistic,
            lambda: 1.0,
            class_weighting: false,
            max_iter: 1000,
            tol: 1e-6,
            seed: 0,
        }
    }
}

/// Per-class solver outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFit {
    pub class: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Primal objective at the returned iterate.
    pub objective: f64,
    /// Objective the solver drives down, recorded once per epoch. For the SVM
    /// this is the negated dual scaled by `lambda`.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub classes: Vec<ClassFit>,
}

impl FitReport {
    /// Classes whose solver hit the iteration cap.
    pub fn non_converged(&self) -> Vec<usize> {
        self.classes.iter().filter(|c| !c.converged).map(|c| c.class).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    kind: LinearKind,
    lambda: f64,
    /// n_classes x n_features
    weights: DenseMatrix,
    bias: Vec<f64>,
    class_weights: Vec<f64>,
    /// Classes absent from training never win the argmax.
    trained: Vec<bool>,
}

/// `w_c = (sum_i n_i) / n_c` for classes present in `labels`; 0 for absent
/// classes.
pub fn class_weights(labels: &[usize], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    let total = labels.len() as f64;
    counts
        .iter()
        .map(|&n| if n == 0 { 0.0 } else { total / n as f64 })
        .collect()
}

/// One binary subproblem of the one-vs-rest scheme.
pub struct BinaryProblem<'a> {
    pub x: &'a Features,
    /// +1 / -1
    pub y: Vec<f64>,
    pub omega: Vec<f64>,
    pub lambda: f64,
}

fn log1p_exp_neg(z: f64) -> f64 {
    // log(1 + e^-z)
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

fn sigmoid_neg(z: f64) -> f64 {
    // 1 / (1 + e^z)
    if z > 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

impl BinaryProblem<'_> {
    fn n_features(&self) -> usize {
        self.x.n_cols()
    }

    /// Logistic objective and gradient at `params = [w..., b]`.
    pub fn logistic_value_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let f = self.n_features();
        let (w, b) = (&params[..f], params[f]);
        let mut grad: Vec<f64> = w.iter().map(|wi| self.lambda * wi).collect();
        grad.push(0.0);
        let mut value = 0.5 * self.lambda * w.iter().map(|v| v * v).sum::<f64>();
        for i in 0..self.x.n_rows() {
            let row = self.x.row(i);
            let z = self.y[i] * (row.dot(w) + b);
            value += self.omega[i] * log1p_exp_neg(z);
            let coef = -self.omega[i] * self.y[i] * sigmoid_neg(z);
            if coef != 0.0 {
                row.axpy(coef, &mut grad[..f]);
                grad[f] += coef;
            }
        }
        (value, grad)
    }

    pub fn hinge_objective(&self, params: &[f64]) -> f64 {
        let f = self.n_features();
        let (w, b) = (&params[..f], params[f]);
        let mut value = 0.5 * self.lambda * w.iter().map(|v| v * v).sum::<f64>();
        for i in 0..self.x.n_rows() {
            let z = self.y[i] * (self.x.row(i).dot(w) + b);
            value += self.omega[i] * (1.0 - z).max(0.0);
        }
        value
    }

    /// Objective as the SVM solver defines it, bias included in the
    /// regularizer.
    pub fn svm_primal(&self, params: &[f64]) -> f64 {
        let b = params[self.n_features()];
        self.hinge_objective(params) + 0.5 * self.lambda * b * b
    }
}

fn lbfgs(problem: &BinaryProblem<'_>, config: &LinearConfig) -> (Vec<f64>, usize, bool, Vec<f64>) {
    const MEMORY: usize = 10;
    let dim = problem.n_features() + 1;
    let mut x = vec![0.0; dim];
    let (mut fx, mut g) = problem.logistic_value_and_gradient(&x);
    let g0 = norm2(&g).max(1.0);
    let mut trace = vec![fx];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    for iter in 1..=config.max_iter {
        if norm2(&g) <= config.tol * g0 {
            return (x, iter - 1, true, trace);
        }
        // two-loop recursion
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &d);
            axpy(-a, y, &mut d);
            alphas.push(a);
        }
        let gamma = history
            .back()
            .map_or(1.0 / norm2(&g), |(s, y, _)| dot(s, y) / dot(y, y));
        d.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let beta = rho * dot(y, &d);
            axpy(a - beta, s, &mut d);
        }
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            history.clear();
            d = g.iter().map(|v| -v / norm2(&g)).collect();
            slope = dot(&g, &d);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            let (ft, gt) = problem.logistic_value_and_gradient(&trial);
            if ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            // no decrease representable along d: at the precision limit
            return (x, iter, norm2(&g) <= 1e-3 * g0, trace);
        };
        if fx - fnew <= f64::EPSILON * fx.abs() {
            // accepted step is below rounding noise
            let done = norm2(&gn) <= 1e-3 * g0;
            trace.push(fnew);
            return (xn, iter, done, trace);
        }
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm2(&s) * norm2(&y) {
            if history.len() == MEMORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = xn;
        fx = fnew;
        g = gn;
        trace.push(fx);
    }
    let converged = norm2(&g) <= config.tol * g0;
    (x, config.max_iter, converged, trace)
}

/// Dual coordinate descent for the L1-loss SVM with the bias folded in as a
/// constant feature.
fn dual_cd(problem: &BinaryProblem<'_>, config: &LinearConfig) -> (Vec<f64>, usize, bool, Vec<f64>) {
    let f = problem.n_features();
    let n = problem.x.n_rows();
    let upper: Vec<f64> = problem.omega.iter().map(|o| o / problem.lambda).collect();
    let qii: Vec<f64> = (0..n).map(|i| problem.x.row(i).sq_norm() + 1.0).collect();
    let mut alpha = vec![0.0; n];
    // w has f + 1 entries, the last being the bias
    let mut w = vec![0.0; f + 1];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dual_scaled = |alpha: &[f64], w: &[f64]| {
        // lambda * (0.5 |w|^2 - sum alpha), to be minimized
        problem.lambda * (0.5 * dot(w, w) - alpha.iter().sum::<f64>())
    };
    let mut trace = vec![dual_scaled(&alpha, &w)];
    for epoch in 1..=config.max_iter {
        order.shuffle(&mut rng);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for &i in &order {
            let row = problem.x.row(i);
            let yi = problem.y[i];
            let g = yi * (row.dot(&w[..f]) + w[f]) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == upper[i] {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / qii[i]).clamp(0.0, upper[i]);
                let delta = (alpha[i] - old) * yi;
                if delta != 0.0 {
                    row.axpy(delta, &mut w[..f]);
                    w[f] += delta;
                }
            }
        }
        trace.push(dual_scaled(&alpha, &w));
        if pg_max - pg_min <= config.tol {
            return (w, epoch, true, trace);
        }
    }
    (w, config.max_iter, false, trace)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn linear_fit(
    train: &Features,
    labels: &[usize],
    n_classes: usize,
    config: &LinearConfig,
) -> Result<(LinearModel, FitReport), ClassifyError> {
    if train.n_rows() == 0 {
        return Err(ClassifyError::EmptyTrainingSet);
    }
    check_labels(train.n_rows(), labels, n_classes)?;
    let cw = class_weights(labels, n_classes);
    let present: Vec<usize> = (0..n_classes).filter(|&c| cw[c] > 0.0).collect();
    if present.len() < 2 {
        return Err(ClassifyError::SingleClassTraining);
    }
    let omega: Vec<f64> = if config.class_weighting {
        labels.iter().map(|&l| cw[l]).collect()
    } else {
        vec![1.0; labels.len()]
    };
    let f = train.n_cols();
    let fits: Vec<(usize, Vec<f64>, ClassFit)> = present
        .par_iter()
        .map(|&c| {
            let problem = BinaryProblem {
                x: train,
                y: labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect(),
                omega: omega.clone(),
                lambda: config.lambda,
            };
            let (params, iterations, converged, trace) = match config.kind {
                LinearKind::Logistic => lbfgs(&problem, config),
                LinearKind::Svm => dual_cd(&problem, config),
            };
            let objective = match config.kind {
                LinearKind::Logistic => problem.logistic_value_and_gradient(&params).0,
                LinearKind::Svm => problem.svm_primal(&params),
            };
            let fit = ClassFit {
                class: c,
                iterations,
                converged,
                objective,
                trace,
            };
            (c, params, fit)
        })
        .collect();
    let mut weights = DenseMatrix::zeros(n_classes, f);
    let mut bias = vec![0.0; n_classes];
    let mut trained = vec![false; n_classes];
    let mut classes = Vec::with_capacity(fits.len());
    for (c, params, fit) in fits {
        weights.row_mut(c).copy_from_slice(&params[..f]);
        bias[c] = params[f];
        trained[c] = true;
        classes.push(fit);
    }
    let model = LinearModel {
        kind: config.kind,
        lambda: config.lambda,
        weights,
        bias,
        class_weights: if config.class_weighting { cw } else { vec![1.0; n_classes] },
        trained,
    };
    Ok((model, FitReport { classes }))
}

impl LinearModel {
    pub fn kind(&self) -> LinearKind {
        self.kind
    }

    pub fn n_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn n_features(&self) -> usize {
        self.weights.n_cols()
    }

    pub fn weights(&self) -> &DenseMatrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn class_weights(&self) -> &[f64] {
        &self.class_weights
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `w_c . x + b_c` for every class; untrained classes score `-inf`.
    pub fn decision_function(&self, test: &Features) -> Result<Vec<Vec<f64>>, ClassifyError> {
        if test.n_cols() != self.n_features() {
            return Err(ClassifyError::DimensionMismatch {
                expected: self.n_features(),
                found: test.n_cols(),
            });
        }
        Ok((0..test.n_rows())
            .into_par_iter()
            .map(|i| {
                let row = test.row(i);
                (0..self.n_classes())
                    .map(|c| {
                        if self.trained[c] {
                            row.dot(self.weights.row(c)) + self.bias[c]
                        } else {
                            f64::NEG_INFINITY
                        }
                    })
                    .collect()
            })
            .collect())
    }

    /// Text dump: one `class bias weight...` line per class.
    pub fn dump_weights(&self) -> String {
        let mut s = format!(
            "# kind={:?} lambda={} classes={} features={}\n",
            self.kind,
            self.lambda,
            self.n_classes(),
            self.n_features()
        );
        for c in 0..self.n_classes() {
            let _ = write!(s, "{c} {:e} {:e}", self.class_weights[c], self.bias[c]);
            for w in self.weights.row(c) {
                let _ = write!(s, " {w:e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC, VERSION);
        w.u8(match self.kind {
            LinearKind::Logistic => 0,
            LinearKind::Svm => 1,
        });
        w.f64(self.lambda);
        w.u64(self.n_classes() as u64);
        w.u64(self.n_features() as u64);
        for c in 0..self.n_classes() {
            w.u8(self.trained[c] as u8);
            w.f64(self.class_weights[c]);
            w.f64(self.bias[c]);
        }
        for &v in self.weights.as_slice() {
            w.f64(v);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ClassifyError> {
        let mut r = Reader::open(bytes, MAGIC, VERSION)?;
        let kind = match r.u8("kind")? {
            0 => LinearKind::Logistic,
            1 => LinearKind::Svm,
            k => return Err(DecodeError::Invalid(format!("model kind {k}")).into()),
        };
        let lambda = r.f64("lambda")?;
        let n_classes = r.len("classes", 17)?;
        let n_features = r.u64("n_features")?;
        let mut trained = Vec::with_capacity(n_classes);
        let mut class_weights = Vec::with_capacity(n_classes);
        let mut bias = Vec::with_capacity(n_classes);
        for _ in 0..n_classes {
            trained.push(match r.u8("trained flag")? {
                0 => false,
                1 => true,
                _ => return Err(DecodeError::Invalid("trained flag".into()).into()),
            });
            class_weights.push(r.f64("class weight")?);
            bias.push(r.f64("bias")?);
        }
        let total = (n_classes as u64)
            .checked_mul(n_features)
            .ok_or_else(|| DecodeError::Invalid("dimensions overflow".into()))?;
        let total = r.check_len(total, "weights", 8)?;
        let data = r.f64_vec(total, "weights")?;
        r.finish()?;
        let weights = DenseMatrix::from_vec(n_classes, n_features as usize, data)
            .map_err(|e| DecodeError::Invalid(e.to_string()))?;
        Ok(Self {
            kind,
            lambda,
            weights,
            bias,
            class_weights,
            trained,
        })
    }
}

/// Argmax of a score vector; ties go to the smaller index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (c, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = c;
        }
    }
    best
}

pub fn linear_predict(model: &LinearModel, test: &Features) -> Result<Prediction, ClassifyError> {
    let scores = model.decision_function(test)?;
    Ok(Prediction {
        labels: scores.iter().map(|s| argmax(s)).collect(),
        scores: Some(scores),
    })
}
