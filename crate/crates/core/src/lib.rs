//! Text classification on reduced-precision TF-IDF vectors.
//!
//! The pipeline is: load a labeled corpus ([`corpus`]), fit TF-IDF on the
//! training fold ([`vsm`]), optionally reduce every weight to `b` bits
//! ([`quant`]) and/or project onto a truncated SVD basis ([`lsa`]), then train
//! and evaluate one of four classifiers ([`classify`]) under k-fold
//! cross-validation ([`eval`]).

pub mod classify;
pub mod codec;
pub mod corpus;
pub mod eval;
mod linalg;
pub mod lsa;
pub mod matrix;
pub mod quant;
pub mod vsm;

pub use codec::DecodeError;
pub use corpus::{Corpus, Document, FoldPlan};
pub use matrix::{DenseMatrix, Features, SparseMatrix};
pub use quant::{Bitwidth, QuantizedMatrix};
