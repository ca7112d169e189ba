//! Biomedical literature mining pipeline.
//!
//! The crate turns abstract and clinical-trial records into output tables:
//!
//! * [`corpus`] ingests, normalizes and deduplicates abstract records.
//! * [`dictionary`] compiles the drug-name dictionary and matches it over tokens.
//! * [`preprocess`] splits sentences, tokenizes, detects phrases and builds bags of words.
//! * [`preclinical`] extracts drug / assay-value relations (EC50, IC50, CC50).
//! * [`topics`] trains an LDA topic model by collapsed Gibbs sampling and ranks papers per topic.
//! * [`trials`] classifies clinical trials into drug, vaccine and biologic categories.
//! * [`eval`] scores extraction output against a hand-labeled gold standard.
//! * [`pipeline`] runs the incremental daily update and renders all tables.

pub mod corpus;
pub mod dictionary;
pub mod error;
pub mod eval;
pub mod io;
pub mod pipeline;
pub mod preclinical;
pub mod preprocess;
pub mod topics;
pub mod trials;

pub use error::{Error, Result};
