use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::pipeline::{run_cv, ExperimentReport, PipelineConfig, Variant};
use super::EvalError;
use crate::classify::ClassifierKind;
use crate::corpus::{Corpus, FoldPlan};

/// Cartesian grid over variants, classifiers, bit widths and SVD ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub variants: Vec<Variant>,
    pub classifiers: Vec<ClassifierKind>,
    pub bits: Vec<u32>,
    pub ks: Vec<usize>,
}

impl Grid {
    /// Configurations in grid order (variant, classifier, bits, k). Bits and
    /// ranks only multiply the variants that use them; all other fields are
    /// copied from `base`.
    pub fn expand(&self, base: &PipelineConfig) -> Vec<PipelineConfig> {
        let mut out = Vec::new();
        for &variant in &self.variants {
            let bits: Vec<Option<u32>> = if variant.uses_bits() {
                self.bits.iter().copied().map(Some).collect()
            } else {
                vec![None]
            };
            let ks: Vec<Option<usize>> = if variant.uses_svd() {
                self.ks.iter().copied().map(Some).collect()
            } else {
                vec![None]
            };
            for &classifier in &self.classifiers {
                for &b in &bits {
                    for &k in &ks {
                        out.push(PipelineConfig {
                            variant,
                            classifier,
                            bits: b,
                            k,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    dataset: &'a str,
    config: &'a PipelineConfig,
    fold_seed: u64,
    n_folds: usize,
    stratified: bool,
}

/// Hex SHA-256 of the canonical JSON of everything that determines a result.
pub fn config_key(dataset: &str, config: &PipelineConfig, folds: &FoldPlan) -> String {
    let material = KeyMaterial {
        dataset,
        config,
        fold_seed: folds.seed,
        n_folds: folds.n_folds,
        stratified: folds.stratified,
    };
    let json = serde_json::to_vec(&material).expect("plain data serializes");
    Sha256::digest(&json)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// One JSON file per configuration, named by [`config_key`].
#[derive(Debug, Clone)]
pub struct ResultStore {
    dir: PathBuf,
}

impl ResultStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, EvalError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<ExperimentReport>, EvalError> {
        match fs::read(self.path(key)) {
            Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn put(&self, key: &str, report: &ExperimentReport) -> Result<(), EvalError> {
        let json = serde_json::to_vec_pretty(report)?;
        write_atomic(&self.path(key), &json)?;
        Ok(())
    }

    /// Every stored report, ordered by key.
    pub fn load_all(&self) -> Result<Vec<ExperimentReport>, EvalError> {
        let mut paths: Vec<PathBuf> = fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        paths
            .iter()
            .map(|p| Ok(serde_json::from_slice(&fs::read(p)?)?))
            .collect()
    }
}

/// Writes to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub dataset: String,
    pub config: PipelineConfig,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    /// Successful reports in grid order.
    pub reports: Vec<ExperimentReport>,
    pub failures: Vec<SweepFailure>,
    pub computed: usize,
    pub reused: usize,
}

enum Slot {
    Reused(ExperimentReport),
    Computed(ExperimentReport),
    Failed(String),
}

/// Runs every configuration on one dataset, in parallel on the current rayon
/// pool. Stored results are reused; failures are collected, not raised.
pub fn sweep(
    dataset: &str,
    corpus: &Corpus,
    folds: &FoldPlan,
    grid: &[PipelineConfig],
    store: Option<&ResultStore>,
) -> SweepOutcome {
    let slots: Vec<Slot> = grid
        .par_iter()
        .map(|config| {
            let key = config_key(dataset, config, folds);
            if let Some(store) = store {
                match store.get(&key) {
                    Ok(Some(r)) => return Slot::Reused(r),
                    Ok(None) => {}
                    Err(e) => return Slot::Failed(format!("result store: {e}")),
                }
            }
            let mut report = match run_cv(corpus, config, folds) {
                Ok(r) => r,
                Err(e) => return Slot::Failed(e.to_string()),
            };
            report.dataset = dataset.to_owned();
            if let Some(store) = store {
                if let Err(e) = store.put(&key, &report) {
                    return Slot::Failed(format!("result store: {e}"));
                }
            }
            Slot::Computed(report)
        })
        .collect();
    let mut out = SweepOutcome::default();
    for (slot, config) in slots.into_iter().zip(grid) {
        match slot {
            Slot::Reused(r) => {
                out.reused += 1;
                out.reports.push(r);
            }
            Slot::Computed(r) => {
                out.computed += 1;
                out.reports.push(r);
            }
            Slot::Failed(message) => out.failures.push(SweepFailure {
                dataset: dataset.to_owned(),
                config: config.clone(),
                message,
            }),
        }
    }
    out
}

pub const CSV_HEADER: [&str; 12] = [
    "dataset",
    "variant",
    "classifier",
    "b",
    "k",
    "seed",
    "macro_f1_mean",
    "macro_f1_std",
    "micro_acc_mean",
    "micro_acc_std",
    "train_s",
    "test_s",
];

pub fn csv_record(report: &ExperimentReport) -> [String; 12] {
    let c = &report.config;
    let opt = |v: Option<String>| v.unwrap_or_default();
    [
        report.dataset.clone(),
        c.variant.as_str().to_owned(),
        c.classifier.as_str().to_owned(),
        opt(c.bits.map(|b| b.to_string())),
        opt(c.k.map(|k| k.to_string())),
        c.seed.to_string(),
        report.mean.macro_f1.to_string(),
        report.std.macro_f1.to_string(),
        report.mean.micro_accuracy.to_string(),
        report.std.micro_accuracy.to_string(),
        report.mean.train_seconds.to_string(),
        report.mean.test_seconds.to_string(),
    ]
}

pub fn write_csv<W: Write>(reports: &[ExperimentReport], out: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(io::Error::from)?;
    for r in reports {
        w.write_record(csv_record(r)).map_err(io::Error::from)?;
    }
    w.flush()?;
    Ok(())
}
