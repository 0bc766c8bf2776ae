use thiserror::Error;

/// Which side of a coupling an index refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Row,
    Column,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Axis::Row => f.write_str("row"),
            Axis::Column => f.write_str("column"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GwError {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("relation matrix is not symmetric at ({row}, {col})")]
    NonSymmetricRelation { row: usize, col: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFiniteEntry { row: usize, col: usize },
    #[error("negative weight at index {index}")]
    NegativeWeight { index: usize },
    #[error("distribution has no positive mass")]
    EmptyDistribution,
    #[error("balanced distribution sums to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("distributions mix balanced and unbalanced modes")]
    ModeMismatch,
    #[error("ground cost undefined at ({a}, {b})")]
    DomainError { a: f64, b: f64 },
    #[error("ground cost has no decomposition")]
    MissingDecomposition,
    #[error("index ({row}, {col}) out of range for a {rows}x{cols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("kernel {axis} {index} carries mass but has no positive entry")]
    InfeasibleKernel { axis: Axis, index: usize },
    #[error("scaling vector became non-finite at inner iteration {iteration}")]
    NumericalUnderflow { iteration: usize },
    #[error("invalid regularizer: {0}")]
    InvalidRegularizer(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("objective is not finite")]
    NonFiniteObjective,
    #[error("plan mass collapsed to {mass}")]
    MassCollapse { mass: f64 },
    #[error("naive contraction of size {n} exceeds the guard of {limit}; enable the override to proceed")]
    SizeGuard { n: usize, limit: usize },
    #[error("invalid probability matrix: {0}")]
    InvalidProbabilities(String),
}

pub type Result<T> = std::result::Result<T, GwError>;
