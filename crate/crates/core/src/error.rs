use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("unknown category `{value}` for feature `{feature}`")]
    UnknownCategory { feature: String, value: String },
    #[error("degenerate reference: no row differs from the reference instance")]
    DegenerateReference,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("arity mismatch: expected {expected} values, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("training needs at least two classes")]
    SingleClass,
    #[error("non-finite feature value")]
    NonFinite,
    #[error("no counterfactual found: the model looks locally constant")]
    NoCounterfactual,
    #[error("unsupported feature `{0}`: method handles numerical features only")]
    UnsupportedFeature(String),
    #[error("singular least-squares system")]
    Singular,
    #[error("model format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
