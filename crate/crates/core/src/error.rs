use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GeometryError {
    #[error("chart point outside the model domain: {0}")]
    Domain(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("derivative chains longer than {max} are not supported (got {got})")]
    UnsupportedOrder { got: usize, max: usize },

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("non-finite value at sample {index}: {detail}")]
    Data { index: usize, detail: String },

    #[error("invalid model description: {0}")]
    InvalidModel(String),

    #[error("numerical failure: {0}")]
    Numeric(String),
}

pub type Result<T, E = GeometryError> = std::result::Result<T, E>;
