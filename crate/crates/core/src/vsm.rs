//! TF-IDF vector space model.
//!
//! `tf` is the in-vocabulary term count divided by the number of
//! in-vocabulary tokens of the document, `idf` is either `ln(|D| / df)` or the
//! smoothed `ln((1 + |D|) / (1 + df)) + 1`. Rows are L2-normalized by default
//! so every stored weight lies in `(0, 1]`.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::Document;
use crate::matrix::SparseMatrix;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VsmError {
    #[error("cannot fit TF-IDF on an empty training set")]
    EmptyTrainingSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum IdfMode {
    /// `ln(|D| / df)`
    #[default]
    PaperLiteral,
    /// `ln((1 + |D|) / (1 + df)) + 1`
    Smoothed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NormMode {
    #[default]
    L2,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfidfModel {
    terms: Vec<String>,
    index: HashMap<String, u32>,
    idf: Vec<f64>,
    idf_mode: IdfMode,
    norm_mode: NormMode,
}

pub fn idf_value(mode: IdfMode, n_docs: usize, df: usize) -> f64 {
    let (n, df) = (n_docs as f64, df as f64);
    match mode {
        IdfMode::PaperLiteral => (n / df).ln(),
        IdfMode::Smoothed => ((1.0 + n) / (1.0 + df)).ln() + 1.0,
    }
}

/// Learns the vocabulary (sorted term order) and document frequencies from
/// the training documents only.
pub fn fit_tfidf<'a, I>(
    train_docs: I,
    idf_mode: IdfMode,
    norm_mode: NormMode,
) -> Result<TfidfModel, VsmError>
where
    I: IntoIterator<Item = &'a Document>,
{
    let mut df: HashMap<&str, usize> = HashMap::new();
    let mut n_docs = 0usize;
    for doc in train_docs {
        n_docs += 1;
        let unique: BTreeSet<&str> = doc.tokens.iter().map(String::as_str).collect();
        for t in unique {
            *df.entry(t).or_default() += 1;
        }
    }
    if n_docs == 0 {
        return Err(VsmError::EmptyTrainingSet);
    }
    let mut terms: Vec<&str> = df.keys().copied().collect();
    terms.sort_unstable();
    let idf = terms
        .iter()
        .map(|t| idf_value(idf_mode, n_docs, df[t]))
        .collect();
    let index = terms
        .iter()
        .enumerate()
        .map(|(i, t)| (t.to_string(), i as u32))
        .collect();
    Ok(TfidfModel {
        terms: terms.into_iter().map(str::to_owned).collect(),
        index,
        idf,
        idf_mode,
        norm_mode,
    })
}

impl TfidfModel {
    pub fn vocabulary_size(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn column(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn idf_mode(&self) -> IdfMode {
        self.idf_mode
    }

    pub fn norm_mode(&self) -> NormMode {
        self.norm_mode
    }

    /// SHA-256 prefix of the ordered vocabulary; ties serialized models to
    /// the feature space they were fitted on.
    pub fn vocabulary_hash(&self) -> u64 {
        let mut h = Sha256::new();
        for t in &self.terms {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    pub fn transform_doc(&self, doc: &Document) -> Vec<(u32, f64)> {
        let mut counts: HashMap<u32, usize> = HashMap::new();
        let mut total = 0usize;
        for t in &doc.tokens {
            if let Some(&c) = self.index.get(t) {
                *counts.entry(c).or_default() += 1;
                total += 1;
            }
        }
        let mut row: Vec<(u32, f64)> = counts
            .into_iter()
            .map(|(c, n)| (c, n as f64 / total as f64 * self.idf[c as usize]))
            .filter(|&(_, w)| w != 0.0)
            .collect();
        row.sort_unstable_by_key(|&(c, _)| c);
        if self.norm_mode == NormMode::L2 {
            let norm = row.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
            if norm > 0.0 {
                for (_, w) in &mut row {
                    *w = (*w / norm).min(1.0);
                }
            }
        }
        row
    }

    pub fn transform<'a, I>(&self, docs: I) -> SparseMatrix
    where
        I: IntoIterator<Item = &'a Document>,
    {
        let mut m = SparseMatrix::empty(self.vocabulary_size());
        for d in docs {
            m.push_row(self.transform_doc(d));
        }
        m
    }
}
