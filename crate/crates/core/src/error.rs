use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("non-numeric or missing value in column `{column}` at data row {row}")]
    NonNumeric { row: usize, column: String },

    #[error("ineligible RCT unit at data row {row}")]
    IneligibleRctUnit { row: usize },

    #[error("v_star at data row {row} disagrees with the eligibility criteria (column {given}, derived {derived})")]
    VStarMismatch { row: usize, given: u8, derived: u8 },

    #[error("unknown covariate `{0}`")]
    UnknownCovariate(String),

    #[error("empty treatment arm: {0}")]
    EmptyArm(String),

    #[error("empty subset: {0}")]
    EmptySubset(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("rank-deficient design: column `{column}` is collinear with earlier columns")]
    RankDeficient { column: String },

    #[error("response has a single class; logistic fit needs both 0 and 1")]
    OneClass,

    #[error("models are not nested: {0}")]
    NonNested(String),

    #[error("zero denominator in {0}")]
    ZeroDenominator(String),

    #[error("{failed} of {total} bootstrap replicates failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::OneClass
                | Error::ZeroDenominator(_)
                | Error::TooManyFailures { .. }
        )
    }

    pub fn kind(&self) -> &'static str {
        if self.is_numerical() {
            "numerical"
        } else {
            "validation"
        }
    }
}
