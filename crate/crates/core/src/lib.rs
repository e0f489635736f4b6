//! Multi-perspective stance classification.
//!
//! The crate builds two competing training sets from a crowd-annotated
//! corpus: one majority-vote label per document ([`perspectives::build_baseline_dataset`])
//! or one instance per annotator label ([`perspectives::disaggregate`]).
//! Long documents are split into sentence-aligned chunks
//! ([`chunker::chunk_document`]) whose predictions are merged by a
//! token-length weighted mean ([`model::aggregate_chunk_predictions`]).
//! [`evaluation::run_experiment`] trains both paradigms, with and without
//! chunking, and scores them on one majority-labelled test set.

pub mod agreement;
pub mod chunker;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod perspectives;
pub mod rng;

pub use error::{Error, Result};
