//! Dataset ingestion, label indexing and fold partitioning.
//!
//! Datasets use the one-document-per-line layout: the class label, a run of
//! whitespace, then the already lowercased and stemmed tokens separated by
//! whitespace. Labels get ids in order of first appearance.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Name of the generator behind [`make_folds`], echoed into reports.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng::seed_from_u64 (rand_chacha 0.9), Fisher-Yates shuffle";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {0}: label without any tokens")]
    MalformedLine(usize),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("need at least {n_folds} documents for {n_folds} folds, corpus has {docs}")]
    TooFewDocuments { docs: usize, n_folds: usize },
    #[error("n_folds must be at least 2, got {0}")]
    InvalidFoldCount(usize),
    #[error("corpus is empty")]
    Empty,
    #[error("manifest: {0}")]
    Manifest(String),
}

/// Supported on-disk dataset layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    #[default]
    CachopoLines,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub label_id: usize,
    pub tokens: Vec<String>,
}

/// Bidirectional label-string <-> id map.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelIndex {
    names: Vec<String>,
    ids: HashMap<String, usize>,
}

impl LabelIndex {
    pub fn get_or_insert(&mut self, name: &str) -> usize {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
    labels: LabelIndex,
    class_counts: Vec<usize>,
}

impl Corpus {
    /// Builds a corpus from `(label, tokens)` pairs, assigning label ids in
    /// first-appearance order.
    pub fn from_labeled<I, L, T>(items: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = (L, Vec<T>)>,
        L: AsRef<str>,
        T: Into<String>,
    {
        let mut labels = LabelIndex::default();
        let mut documents = Vec::new();
        for (i, (label, tokens)) in items.into_iter().enumerate() {
            if tokens.is_empty() {
                return Err(CorpusError::MalformedLine(i + 1));
            }
            let label_id = labels.get_or_insert(label.as_ref());
            documents.push(Document {
                label_id,
                tokens: tokens.into_iter().map(Into::into).collect(),
            });
        }
        Ok(Self::assemble(documents, labels))
    }

    fn assemble(documents: Vec<Document>, labels: LabelIndex) -> Self {
        let mut class_counts = vec![0; labels.len()];
        for d in &documents {
            class_counts[d.label_id] += 1;
        }
        Self {
            documents,
            labels,
            class_counts,
        }
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn labels(&self) -> &LabelIndex {
        &self.labels
    }

    pub fn doc_count(&self) -> usize {
        self.documents.len()
    }

    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn label_ids(&self) -> Vec<usize> {
        self.documents.iter().map(|d| d.label_id).collect()
    }

    /// Returns a new corpus with the same label index restricted to `indices`.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let documents = indices.iter().map(|&i| self.documents[i].clone()).collect();
        Self::assemble(documents, self.labels.clone())
    }
}

/// Parses the line format from any buffered reader.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Corpus, CorpusError> {
    let mut labels = LabelIndex::default();
    let mut documents = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if let Some(doc) = parse_line(&line, i + 1, &mut labels)? {
            documents.push(doc);
        }
    }
    Ok(Corpus::assemble(documents, labels))
}

/// Parses the line format from an in-memory string.
pub fn parse_corpus(text: &str) -> Result<Corpus, CorpusError> {
    let mut labels = LabelIndex::default();
    let mut documents = Vec::new();
    for (i, line) in text.split('\n').enumerate() {
        if let Some(doc) = parse_line(line, i + 1, &mut labels)? {
            documents.push(doc);
        }
    }
    Ok(Corpus::assemble(documents, labels))
}

fn parse_line(
    line: &str,
    line_no: usize,
    labels: &mut LabelIndex,
) -> Result<Option<Document>, CorpusError> {
    let line = line.strip_suffix('\r').unwrap_or(line);
    let mut parts = line.split_whitespace();
    let Some(label) = parts.next() else {
        return Ok(None);
    };
    let tokens: Vec<String> = parts.map(str::to_owned).collect();
    if tokens.is_empty() {
        return Err(CorpusError::MalformedLine(line_no));
    }
    let label_id = labels.get_or_insert(label);
    Ok(Some(Document { label_id, tokens }))
}

pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    match format {
        CorpusFormat::CachopoLines => {
            let file = fs::File::open(path.as_ref())?;
            read_corpus(BufReader::new(file))
        }
    }
}

/// Per-document fold assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub n_folds: usize,
    pub stratified: bool,
    pub fold_assignments: Vec<usize>,
}

impl FoldPlan {
    /// `(train, test)` document indices for one fold, both ascending.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, &f) in self.fold_assignments.iter().enumerate() {
            if f == fold {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in &self.fold_assignments {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffles document indices with a seeded generator and deals them
/// round-robin into `n_folds` folds.
pub fn make_folds(corpus: &Corpus, n_folds: usize, seed: u64) -> Result<FoldPlan, CorpusError> {
    make_folds_with(corpus, n_folds, seed, false)
}

/// Like [`make_folds`]; with `stratified` the shuffled order is regrouped by
/// class (stable) before dealing, so every class is spread evenly while fold
/// sizes still differ by at most one.
pub fn make_folds_with(
    corpus: &Corpus,
    n_folds: usize,
    seed: u64,
    stratified: bool,
) -> Result<FoldPlan, CorpusError> {
    if n_folds < 2 {
        return Err(CorpusError::InvalidFoldCount(n_folds));
    }
    let n = corpus.doc_count();
    if n < n_folds {
        return Err(CorpusError::TooFewDocuments { docs: n, n_folds });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    if stratified {
        let docs = corpus.documents();
        order.sort_by_key(|&i| docs[i].label_id);
    }
    let mut fold_assignments = vec![0; n];
    for (pos, &doc) in order.iter().enumerate() {
        fold_assignments[doc] = pos % n_folds;
    }
    Ok(FoldPlan {
        seed,
        n_folds,
        stratified,
        fold_assignments,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRecord {
    pub classes: usize,
    pub documents: usize,
    pub vocabulary: usize,
    pub mean_doc_length: f64,
    pub smallest_class: usize,
    pub largest_class: usize,
    pub mean_class_size: f64,
    /// Population standard deviation of class sizes.
    pub class_size_std: f64,
    pub relative_std: f64,
}

pub fn corpus_stats(corpus: &Corpus) -> Result<StatsRecord, CorpusError> {
    if corpus.doc_count() == 0 {
        return Err(CorpusError::Empty);
    }
    let mut vocab: HashSet<&str> = HashSet::new();
    let mut total_tokens = 0usize;
    for d in corpus.documents() {
        total_tokens += d.tokens.len();
        vocab.extend(d.tokens.iter().map(String::as_str));
    }
    let counts = corpus.class_counts();
    let c = counts.len() as f64;
    let mean = counts.iter().sum::<usize>() as f64 / c;
    let var = counts
        .iter()
        .map(|&n| (n as f64 - mean).powi(2))
        .sum::<f64>()
        / c;
    let std = var.sqrt();
    Ok(StatsRecord {
        classes: counts.len(),
        documents: corpus.doc_count(),
        vocabulary: vocab.len(),
        mean_doc_length: total_tokens as f64 / corpus.doc_count() as f64,
        smallest_class: counts.iter().copied().min().unwrap_or(0),
        largest_class: counts.iter().copied().max().unwrap_or(0),
        mean_class_size: mean,
        class_size_std: std,
        relative_std: std / mean,
    })
}

/// One dataset entry of a JSON manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub documents: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    #[serde(default)]
    pub format: CorpusFormat,
}

/// Dataset name -> entry. Relative paths resolve against the manifest's
/// directory.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub datasets: BTreeMap<String, DatasetEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mismatch {
    Documents { expected: usize, found: usize },
    Classes { expected: usize, found: usize },
}

impl DatasetManifest {
    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        serde_json::from_str(text).map_err(|e| CorpusError::Manifest(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let mut m = Self::from_json(&fs::read_to_string(path)?)?;
        if let Some(dir) = path.parent() {
            m.resolve_relative_to(dir);
        }
        Ok(m)
    }

    pub fn resolve_relative_to(&mut self, dir: &Path) {
        for e in self.datasets.values_mut() {
            if e.path.is_relative() {
                e.path = dir.join(&e.path);
            }
        }
    }
}

impl DatasetEntry {
    /// Compares a loaded corpus against the expected counts.
    pub fn verify(&self, corpus: &Corpus) -> Vec<Mismatch> {
        let mut out = Vec::new();
        if let Some(expected) = self.documents {
            if expected != corpus.doc_count() {
                out.push(Mismatch::Documents {
                    expected,
                    found: corpus.doc_count(),
                });
            }
        }
        if let Some(expected) = self.classes {
            if expected != corpus.n_classes() {
                out.push(Mismatch::Classes {
                    expected,
                    found: corpus.n_classes(),
                });
            }
        }
        out
    }
}
