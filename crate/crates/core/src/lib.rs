//! Daily stress recognition from smartphone activity logs, weather and
//! personality traits.
//!
//! The crate covers the whole batch pipeline: CSV log ingestion, per-day
//! behavioural feature extraction, bias-corrected entropy, second-order and
//! windowed aggregation into a candidate feature matrix, a from-scratch
//! Random Forest with out-of-bag statistics and importances, Gini-importance
//! feature selection, and an evaluation harness (metrics, subject-disjoint
//! splits, cross-validation and family ablations). A seeded synthetic cohort
//! generator with a planted signal stands in for real study data.

pub mod aggregate;
pub mod digest;
pub mod entropy;
pub mod error;
pub mod eval;
pub mod features;
pub mod forest;
pub mod ingest;
pub mod matrix;
pub mod selection;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
