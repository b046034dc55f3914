use thiserror::Error;

use crate::family::FamilyKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} is outside the domain of {family}")]
    Domain { family: FamilyKind, value: f64 },

    #[error("conditional of {family} is not normalizable at natural parameter {eta}")]
    NonNormalizableConditional { family: FamilyKind, eta: f64 },

    #[error("invalid model: {}", .0.join("; "))]
    InvalidModel(Vec<String>),

    #[error("model is not normalizable: {0}")]
    NotNormalizable(String),

    #[error("missing value for neighbor {0}")]
    MissingNeighbor(String),

    #[error("sampler aborted at node {node}: {reason}")]
    SamplerAbort { node: String, reason: String },

    #[error("model is not enumerable: {0}")]
    NotEnumerable(String),

    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),

    #[error("skeleton mismatch: {0}")]
    SkeletonMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported format version {0}")]
    FormatVersion(String),

    #[error("dataset error at row {row}, column {col}: {msg}")]
    DatasetCell { row: usize, col: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
