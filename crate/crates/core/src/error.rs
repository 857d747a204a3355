use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}, column {column}: cannot parse {value:?} as a number")]
    NonNumeric {
        row: usize,
        column: usize,
        value: String,
    },

    #[error("row {row}, column {column}: value is not finite")]
    NonFinite { row: usize, column: usize },

    #[error("row {row}: expected {expected} columns, found {found}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}: selected column {column} does not exist ({found} columns present)")]
    MissingColumn {
        row: usize,
        column: usize,
        found: usize,
    },

    #[error("need at least 2 observations, found {0}")]
    TooFewRows(usize),

    #[error("malformed csv at row {row}: {message}")]
    Csv { row: usize, message: String },

    #[error("series of length {len} is shorter than the window width {width}")]
    SeriesTooShort { len: usize, width: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{pairs} pairs exceed the pair budget of {budget}; supply a subsample seed")]
    OverBudget { pairs: usize, budget: usize },

    #[error("all pairwise radii are zero (every observation is identical)")]
    Degenerate,

    #[error("scale range [{lo}, {hi}] is empty")]
    EmptyRange { lo: f64, hi: f64 },

    #[error("scale range [{lo}, {hi}] holds {found} curve points, need at least {needed}")]
    InsufficientPoints {
        lo: f64,
        hi: f64,
        found: usize,
        needed: usize,
    },

    #[error("apparent ID {d_hat} exceeds the apparent ID {limit} of the search ceiling d = {ceiling}")]
    BeyondCeiling { d_hat: f64, limit: f64, ceiling: u32 },

    #[error("apparent ID {d_hat} lies below the apparent ID {floor} of d = 1")]
    BelowFloor { d_hat: f64, floor: f64 },

    #[error("predicted apparent IDs are not strictly increasing at d = {d}")]
    NonMonotone { d: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
