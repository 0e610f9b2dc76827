//! Zero-shot classification with many attribute-conditioned vectors per class.
//!
//! Each class is represented by its classname embedding plus a pool of
//! subpopulation embeddings (kinds, states, backgrounds, ...). An image is
//! scored against every pool member and the similarities are consolidated
//! into one score per class; the default rule averages only the `k` most
//! similar members, optionally interpolated with the full average.
//!
//! Modules:
//! - [`embedding_store`]: EMBD tables, manifests, prompt templates, classname dedup.
//! - [`attribute_catalog`]: typed subpopulation catalogs.
//! - [`consolidation`]: scoring rules and batch prediction.
//! - [`metrics`]: accuracy, worst-group, average precision, diversity, margins.
//! - [`analysis`]: k/lambda sweeps, attribute-type ablations, disagreement reports.
//! - [`synthgen`]: deterministic synthetic hypersphere datasets.

// `!(x > 0.0)` is the NaN-rejecting form used throughout for parameter checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod attribute_catalog;
pub mod consolidation;
pub mod embedding_store;
pub mod metrics;
pub mod synthgen;

mod error;
pub use error::Error;
