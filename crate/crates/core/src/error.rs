use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("invalid value `{value}` in column `{column}` (row {row})")]
    BadValue {
        column: String,
        row: usize,
        value: String,
    },

    #[error("label column `{column}` must be binary, found {found} distinct values")]
    NonBinaryLabel { column: String, found: usize },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("the {0} group is empty")]
    EmptyGroup(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("stratum `{label}` has {count} record(s); at least 2 are required")]
    SmallStratum { label: String, count: usize },

    #[error("objective became non-finite: {0}")]
    NonFinite(String),

    #[error("search space of {0} subgroups exceeds the exhaustive limit")]
    SearchSpaceTooLarge(f64),

    #[error("group value `{0}` was not seen at fit time")]
    UnseenGroup(String),

    #[error("label `{0}` is outside the binary alphabet")]
    LabelOutsideAlphabet(String),

    #[error("config: {0}")]
    Config(String),

    #[error("every method failed: {0}")]
    AllMethodsFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
