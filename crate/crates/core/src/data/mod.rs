//! Tabular data: schema-typed datasets, CSV ingestion for the registered
//! datasets, one-hot encoding, stratified splitting and a synthetic
//! biased-data generator.

mod dataset;
mod encode;
mod registry;
mod split;
mod synth;

pub use dataset::{Column, ColumnKind, ColumnSpec, Dataset, Privileged, ProtectedSpec, Schema, UNKNOWN};
pub use encode::{encode, encode_excluding, EncodedMatrix};
pub use registry::{load_registered, LoadOptions, Registered};
pub use split::{kfold, split, split_indices, stratified_folds, SplitPlan};
pub use synth::{synth_biased, SynthConfig, SYNTH_GROUPS, SYNTH_REGIONS, SYNTH_SECTORS};

/// Per-record privileged flag for the dataset's protected attribute.
pub fn group_mask(ds: &Dataset) -> crate::Result<Vec<bool>> {
    ds.group_mask()
}
