//! Error type shared by every module in the crate.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at data row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },

    #[error("data row {row} has {found} fields, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("column {name:?} has zero observed values")]
    EmptyColumn { name: String },

    #[error("column {col} is degenerate: {message}")]
    DegenerateColumn { col: usize, message: String },

    #[error("column {col} is not missing-prone; its indicator is constant 1")]
    NotMissingProne { col: usize },

    #[error("matrix is not positive definite: {context}")]
    NotPositiveDefinite { context: String },

    #[error("design matrix is rank deficient")]
    SingularDesign,

    #[error("degenerate fit: residual sum of squares is zero, log-likelihood unbounded")]
    DegenerateFit,

    #[error("need more rows than parameters: {rows} rows for {params} parameters")]
    InsufficientRows { rows: usize, params: usize },

    #[error("binary response is constant; logistic likelihood has no interior maximum")]
    ConstantResponse,

    #[error("complete or quasi-complete separation: coefficients diverged")]
    Separation,

    #[error("optimizer did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("models are not nested: alternative has {alt_params} parameters, null has {null_params}")]
    NotNested {
        null_params: usize,
        alt_params: usize,
    },

    #[error("nesting violated: alternative log-likelihood {alt} below null {null}")]
    NestingViolated { null: f64, alt: f64 },

    #[error("empty truncation interval: lo {lo} >= hi {hi}")]
    EmptyInterval { lo: f64, hi: f64 },

    #[error("degrees of freedom {nu} too small for dimension {dim}")]
    InvalidDegreesOfFreedom { nu: f64, dim: usize },

    #[error("nothing to test: fewer than two missing-prone columns")]
    NothingToTest,

    #[error("unsupported design: no fully observed column to condition on")]
    UnsupportedDesign,

    #[error("column {col} has {found} observed rows, imputation model needs at least {needed}")]
    InsufficientObserved {
        col: usize,
        needed: usize,
        found: usize,
    },

    #[error("need at least two imputations, got {m}")]
    TooFewImputations { m: usize },

    #[error("combining failed: {usable} usable imputations out of {total}")]
    CombiningFailed { usable: usize, total: usize },

    #[error("sampler configuration invalid: {message}")]
    InvalidSamplerConfig { message: String },

    #[error("calibration failed for indicator {indicator}: {message}")]
    CalibrationFailed { indicator: usize, message: String },

    #[error("factorial grid is incomplete: {message}")]
    IncompleteGrid { message: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
