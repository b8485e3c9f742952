//! Audit toolkit for bias-mitigation interventions on binary classifiers.
//!
//! The crate trains a fairness-unaware base model, applies one of six
//! mitigation methods (pre-, in- and post-processing), measures group
//! fairness before and after, and then characterises who was affected:
//! every record gets a treatment-change label in {-1, 0, +1}, an
//! explainable decision tree is fitted to those labels, and its leaf paths
//! are rendered as rules describing the negatively impacted cohort. A
//! multi-dimensional subset scan reports the subgroup whose outcomes the
//! base model mis-estimates the most.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod data;
pub mod error;
pub mod learners;
pub mod matrix;
pub mod meta;
pub mod metrics;
pub mod mitigate;
pub mod scan;
pub(crate) mod seed;

pub use error::{Error, Result};
pub use matrix::Matrix;
