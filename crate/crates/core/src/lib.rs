//! Incremental single-class entity annotation.
//!
//! The crate covers the whole loop: reading pre-tagged corpora, extracting
//! candidate noun phrases, expanding a seed entity over a bipartite
//! phrase/feature graph, training a linear-chain CRF, choosing sentences
//! to label by n-best sequence entropy, auto-annotating confident
//! sentences, and an emulated-annotator harness for offline experiments.

pub mod active;
pub mod corpus;
pub mod crf;
pub mod error;
pub mod esegraph;
pub mod featurize;
pub mod harness;
pub mod npex;

pub use error::{Error, Result};
