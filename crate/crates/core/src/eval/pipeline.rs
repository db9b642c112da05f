use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, mean_std, ConfusionMatrix, MetricRecord};
use super::EvalError;
use crate::classify::{ClassifierKind, FitReport, Model};
use crate::corpus::{Corpus, Document, FoldPlan, RNG_ALGORITHM};
use crate::lsa::{fit_svd_with, SvdModel, SvdOptions};
use crate::matrix::{Features, SparseMatrix};
use crate::quant::{reduce_dense, reduce_sparse, AffineRange};
use crate::vsm::{fit_tfidf, IdfMode, NormMode, TfidfModel};

/// The five pipeline variants, in stage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// TF-IDF, classification.
    Tfidf,
    /// TF-IDF, precision reduction, classification.
    Quant,
    /// TF-IDF, precision reduction, SVD, classification.
    QuantSvd,
    /// TF-IDF, SVD, classification.
    Svd,
    /// TF-IDF, SVD, precision reduction, classification.
    SvdQuant,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Self::Tfidf,
        Self::Quant,
        Self::QuantSvd,
        Self::Svd,
        Self::SvdQuant,
    ];

    /// 1-based position in [`Variant::ALL`].
    pub fn number(self) -> usize {
        Self::ALL.iter().position(|&v| v == self).unwrap() + 1
    }

    pub fn from_number(n: usize) -> Option<Self> {
        n.checked_sub(1).and_then(|i| Self::ALL.get(i).copied())
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Tfidf => "tfidf",
            Self::Quant => "quant",
            Self::QuantSvd => "quant-svd",
            Self::Svd => "svd",
            Self::SvdQuant => "svd-quant",
        }
    }

    pub fn uses_bits(self) -> bool {
        matches!(self, Self::Quant | Self::QuantSvd | Self::SvdQuant)
    }

    pub fn uses_svd(self) -> bool {
        matches!(self, Self::QuantSvd | Self::Svd | Self::SvdQuant)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(v) = s.parse().ok().and_then(Variant::from_number) {
            return Ok(v);
        }
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown variant `{s}` (tfidf, quant, quant-svd, svd, svd-quant or 1..5)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub variant: Variant,
    pub bits: Option<u32>,
    pub k: Option<usize>,
    pub classifier: ClassifierKind,
    /// Seeds the SVD start block and the SVM coordinate order.
    pub seed: u64,
    pub idf_mode: IdfMode,
    pub class_weighting: bool,
    pub lambda: f64,
}

impl PipelineConfig {
    pub fn new(variant: Variant, classifier: ClassifierKind) -> Self {
        Self {
            variant,
            bits: None,
            k: None,
            classifier,
            seed: 0,
            idf_mode: IdfMode::default(),
            class_weighting: false,
            lambda: 1.0,
        }
    }

    pub fn with_bits(mut self, bits: u32) -> Self {
        self.bits = Some(bits);
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let v = self.variant;
        let invalid = |msg: String| Err(EvalError::InvalidConfig(msg));
        match (v.uses_bits(), self.bits) {
            (true, None) => return invalid(format!("variant {v} needs a bit width")),
            (false, Some(_)) => return invalid(format!("variant {v} takes no bit width")),
            (_, Some(b)) if !(1..=64).contains(&b) => {
                return invalid(format!("bit width {b} outside 1..=64"))
            }
            _ => {}
        }
        match (v.uses_svd(), self.k) {
            (true, None) => return invalid(format!("variant {v} needs an SVD rank")),
            (false, Some(_)) => return invalid(format!("variant {v} takes no SVD rank")),
            (_, Some(0)) => return invalid("SVD rank must be at least 1".into()),
            _ => {}
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return invalid(format!("lambda must be positive, got {}", self.lambda));
        }
        Ok(())
    }
}

/// Everything fitted on the training folds that maps documents to features.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    pub tfidf: TfidfModel,
    pub svd: Option<SvdModel>,
    /// Min-max range of the training latent coordinates (variant 5).
    pub latent_range: Option<AffineRange>,
    variant: Variant,
    bits: Option<u32>,
}

impl Representation {
    /// Fits on training documents and returns their features as well.
    pub fn fit(train: &[&Document], config: &PipelineConfig) -> Result<(Self, Features), EvalError> {
        config.validate()?;
        let tfidf = fit_tfidf(train.iter().copied(), config.idf_mode, NormMode::L2)?;
        let x = tfidf.transform(train.iter().copied());
        let mut rep = Self {
            tfidf,
            svd: None,
            latent_range: None,
            variant: config.variant,
            bits: config.bits,
        };
        if let Some(k) = config.k {
            let opts = SvdOptions {
                seed: config.seed,
                ..SvdOptions::default()
            };
            let basis_input = match config.variant {
                Variant::QuantSvd => reduce_sparse(&x, rep.bits.unwrap())?,
                _ => x.clone(),
            };
            let svd = fit_svd_with(&basis_input, k, &opts)?
                .with_vocabulary_hash(rep.tfidf.vocabulary_hash());
            if config.variant == Variant::SvdQuant {
                let latent = svd.project(&x)?;
                rep.latent_range = Some(AffineRange::fit(latent.as_slice())?);
            }
            rep.svd = Some(svd);
        }
        let features = rep.apply(x)?;
        Ok((rep, features))
    }

    pub fn transform(&self, docs: &[&Document]) -> Result<Features, EvalError> {
        self.apply(self.tfidf.transform(docs.iter().copied()))
    }

    fn apply(&self, x: SparseMatrix) -> Result<Features, EvalError> {
        let svd = || self.svd.as_ref().expect("fitted with a rank");
        Ok(match self.variant {
            Variant::Tfidf => Features::Sparse(x),
            Variant::Quant => Features::Sparse(reduce_sparse(&x, self.bits.unwrap())?),
            Variant::QuantSvd => {
                Features::Dense(svd().project(&reduce_sparse(&x, self.bits.unwrap())?)?)
            }
            Variant::Svd => Features::Dense(svd().project(&x)?),
            Variant::SvdQuant => {
                let latent = svd().project(&x)?;
                let range = self.latent_range.expect("fitted with variant 5");
                Features::Dense(reduce_dense(&latent, self.bits.unwrap(), range)?)
            }
        })
    }
}

/// A representation and classifier fitted on one fold's training part.
#[derive(Debug, Clone)]
pub struct FittedFold {
    pub representation: Representation,
    pub model: Model,
    pub fit_report: Option<FitReport>,
    pub train_seconds: f64,
}

pub fn fit_fold(
    corpus: &Corpus,
    train_idx: &[usize],
    config: &PipelineConfig,
) -> Result<FittedFold, EvalError> {
    let start = Instant::now();
    let docs: Vec<&Document> = train_idx.iter().map(|&i| &corpus.documents()[i]).collect();
    let labels: Vec<usize> = docs.iter().map(|d| d.label_id).collect();
    let (representation, features) = Representation::fit(&docs, config)?;
    let (model, fit_report) = Model::fit(
        config.classifier,
        features,
        &labels,
        corpus.n_classes(),
        config.lambda,
        config.class_weighting,
        config.seed,
    )?;
    Ok(FittedFold {
        representation,
        model,
        fit_report,
        train_seconds: start.elapsed().as_secs_f64(),
    })
}

impl FittedFold {
    /// Predicted label ids and the wall-clock seconds spent on them.
    pub fn predict(&self, docs: &[&Document]) -> Result<(Vec<usize>, f64), EvalError> {
        let start = Instant::now();
        let features = self.representation.transform(docs)?;
        let labels = self.model.predict(&features)?.labels;
        Ok((labels, start.elapsed().as_secs_f64()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_docs: usize,
    pub test_docs: usize,
    pub metrics: MetricRecord,
    /// Predicted label ids for the test documents in ascending index order.
    pub predictions: Vec<usize>,
    /// Linear solver classes that hit the iteration cap, with their final
    /// objective.
    pub non_converged: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub macro_f1: f64,
    pub micro_accuracy: f64,
    pub error: f64,
    pub train_seconds: f64,
    pub test_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub crate_version: String,
    pub rng_algorithm: String,
    pub fold_seed: u64,
    pub n_folds: usize,
    pub stratified_folds: bool,
    pub macro_policy: String,
    pub aggregation: String,
    pub error_reduction_reference: String,
    pub multiclass: String,
    pub bias_policy: String,
    pub timing: String,
}

impl ReportMetadata {
    fn new(folds: &FoldPlan) -> Self {
        Self {
            crate_version: env!("CARGO_PKG_VERSION").into(),
            rng_algorithm: RNG_ALGORITHM.into(),
            fold_seed: folds.seed,
            n_folds: folds.n_folds,
            stratified_folds: folds.stratified,
            macro_policy: "mean F1 over classes present in the fold's true labels".into(),
            aggregation: "unweighted mean and population std of per-fold scores".into(),
            error_reduction_reference: "same dataset and classifier, variant 1 (tfidf); \
                variant 4 (svd) with the same k for variant 5"
                .into(),
            multiclass: "one-vs-rest for logistic and svm".into(),
            bias_policy: "logistic: unregularized bias; svm: bias as a regularized constant feature"
                .into(),
            timing: "train: representation and classifier fit on training folds; \
                test: transform and predict of the held-out fold"
                .into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub config: PipelineConfig,
    pub folds: Vec<FoldReport>,
    pub mean: Summary,
    pub std: Summary,
    pub metadata: ReportMetadata,
}

fn summarize(folds: &[FoldReport]) -> (Summary, Summary) {
    let stat = |f: fn(&MetricRecord) -> f64| {
        mean_std(&folds.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>())
    };
    let (mf, sf) = stat(|m| m.macro_f1);
    let (ma, sa) = stat(|m| m.micro_accuracy);
    let (me, se) = stat(|m| m.error);
    let (mtr, str_) = stat(|m| m.train_seconds);
    let (mte, ste) = stat(|m| m.test_seconds);
    (
        Summary {
            macro_f1: mf,
            micro_accuracy: ma,
            error: me,
            train_seconds: mtr,
            test_seconds: mte,
        },
        Summary {
            macro_f1: sf,
            micro_accuracy: sa,
            error: se,
            train_seconds: str_,
            test_seconds: ste,
        },
    )
}

pub fn run_fold(
    corpus: &Corpus,
    config: &PipelineConfig,
    folds: &FoldPlan,
    fold: usize,
) -> Result<FoldReport, EvalError> {
    let (train_idx, test_idx) = folds.split(fold);
    let fitted = fit_fold(corpus, &train_idx, config)?;
    let test_docs: Vec<&Document> = test_idx.iter().map(|&i| &corpus.documents()[i]).collect();
    let (predictions, test_seconds) = fitted.predict(&test_docs)?;
    let truth: Vec<usize> = test_docs.iter().map(|d| d.label_id).collect();
    let cm = ConfusionMatrix::from_predictions(&truth, &predictions, corpus.n_classes())?;
    let mut metrics = compute_metrics(&cm)?;
    metrics.train_seconds = fitted.train_seconds;
    metrics.test_seconds = test_seconds;
    let non_converged = fitted
        .fit_report
        .map(|r| {
            r.classes
                .iter()
                .filter(|c| !c.converged)
                .map(|c| (c.class, c.objective))
                .collect()
        })
        .unwrap_or_default();
    Ok(FoldReport {
        fold,
        train_docs: train_idx.len(),
        test_docs: test_idx.len(),
        metrics,
        predictions,
        non_converged,
    })
}

/// Cross-validates one configuration; the first failing fold aborts the run.
pub fn run_cv(
    corpus: &Corpus,
    config: &PipelineConfig,
    folds: &FoldPlan,
) -> Result<ExperimentReport, EvalError> {
    config.validate()?;
    if folds.fold_assignments.len() != corpus.doc_count() {
        return Err(EvalError::InvalidConfig(format!(
            "fold plan covers {} documents, corpus has {}",
            folds.fold_assignments.len(),
            corpus.doc_count()
        )));
    }
    let reports = (0..folds.n_folds)
        .map(|f| {
            run_fold(corpus, config, folds, f).map_err(|e| EvalError::Fold {
                fold: f,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (mean, std) = summarize(&reports);
    Ok(ExperimentReport {
        dataset: String::new(),
        config: config.clone(),
        folds: reports,
        mean,
        std,
        metadata: ReportMetadata::new(folds),
    })
}
