use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vsmquant::classify::ClassifierKind;
use vsmquant::corpus::{load_corpus, Corpus, DatasetEntry};
use vsmquant::eval::{Grid, Variant};
use vsmquant::vsm::IdfMode;

use crate::CliError;

/// The sweep grid from the paper: all variants, all classifiers, the nine
/// bit widths and six SVD ranks.
pub fn paper_grid() -> Grid {
    Grid {
        variants: Variant::ALL.to_vec(),
        classifiers: ClassifierKind::ALL.to_vec(),
        bits: vec![16, 8, 7, 6, 5, 4, 3, 2, 1],
        ks: vec![100, 200, 300, 400, 500, 1000],
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_folds() -> usize {
    5
}

fn default_lambda() -> f64 {
    1.0
}

/// Single JSON file describing datasets and the experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub datasets: BTreeMap<String, DatasetEntry>,
    #[serde(default = "paper_grid")]
    pub grid: Grid,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_folds")]
    pub n_folds: usize,
    #[serde(default)]
    pub stratified: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub idf_mode: IdfMode,
    #[serde(default)]
    pub class_weighting: bool,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Directory the manifest was read from; relative paths resolve here
    /// unless a cache directory is given.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunManifest {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let m: Self = serde_json::from_str(text).map_err(|e| CliError::Manifest(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Manifest(format!("{}: {e}", path.display())))?;
        let mut m = Self::from_json(&text)?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.n_folds < 2 {
            return Err(CliError::Manifest(format!("n_folds must be at least 2, got {}", self.n_folds)));
        }
        if self.seeds.is_empty() {
            return Err(CliError::Manifest("seeds must not be empty".into()));
        }
        Ok(())
    }

    /// Dataset file location, preferring `cache_dir` for relative paths.
    pub fn dataset_path(&self, entry: &DatasetEntry, cache_dir: Option<&Path>) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            cache_dir.unwrap_or(&self.base_dir).join(&entry.path)
        }
    }

    pub fn entry(&self, name: &str) -> Result<&DatasetEntry, CliError> {
        self.datasets
            .get(name)
            .ok_or_else(|| CliError::UnknownDataset(name.to_owned()))
    }

    /// Names selected by `filter`, or every dataset when `filter` is empty.
    pub fn select(&self, filter: &[String]) -> Result<Vec<String>, CliError> {
        if filter.is_empty() {
            return Ok(self.datasets.keys().cloned().collect());
        }
        for name in filter {
            self.entry(name)?;
        }
        Ok(filter.to_vec())
    }

    pub fn load_dataset(&self, name: &str, cache_dir: Option<&Path>) -> Result<Corpus, CliError> {
        let entry = self.entry(name)?;
        let path = self.dataset_path(entry, cache_dir);
        if !path.exists() {
            return Err(CliError::MissingDataset {
                name: name.to_owned(),
                path,
            });
        }
        load_corpus(&path, entry.format).map_err(|source| CliError::Dataset {
            name: name.to_owned(),
            source,
        })
    }
}
