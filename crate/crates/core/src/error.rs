use thiserror::Error;

/// Errors raised by panel handling, instrument assembly and the test statistics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {what} at row {row}")]
    NonFiniteValue { what: &'static str, row: usize },

    #[error("unbalanced panel: {0}")]
    UnbalancedPanel(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("instance too large for a dense oracle: {size} observations exceeds cap {cap}")]
    InstanceTooLarge { size: usize, cap: usize },

    #[error("too many instruments: K = {k} must be smaller than the sample size {n}")]
    TooManyInstruments { k: usize, n: usize },

    #[error("regressor column {column} is numerically zero")]
    DegenerateX { column: usize },

    #[error("rank collapse while orthonormalizing column {column}")]
    RankCollapse { column: usize },

    #[error("regressor matrix is rank deficient (column {column})")]
    RankDeficient { column: usize },

    #[error("estimated variance of the AR statistic is not positive ({0})")]
    NonPositivePhi(f64),

    #[error("weak or collinear instrument: {0}")]
    WeakOrCollinearIv(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("could not draw a solvable network after {attempts} attempts")]
    RegenerateOrFail { attempts: usize },
}

impl Error {
    /// True for failures of the numerical procedure itself, as opposed to
    /// malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::TooManyInstruments { .. }
                | Error::DegenerateX { .. }
                | Error::RankCollapse { .. }
                | Error::RankDeficient { .. }
                | Error::NonPositivePhi(_)
                | Error::WeakOrCollinearIv(_)
                | Error::SingularSystem(_)
                | Error::RegenerateOrFail { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
