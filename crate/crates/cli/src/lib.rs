//! Command-line front end for the peer-effect AR test: CSV ingestion, the
//! Wins-Produced outcome, rolling windows and report emission.

pub mod app;
pub mod io;
pub mod rolling;
pub mod wins;

pub use app::run_cli;
pub use io::{load_adjacency, load_panel, load_peers, save_panel, LoadOptions};
pub use rolling::{rolling_ar, RollingPoint, RollingSpec, WindowOutcome};
pub use wins::{wins_produced, BoxScore};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("missing cell for unit {unit:?} at time {time:?}")]
    MissingCell { unit: String, time: String },
    #[error("duplicate cell for unit {unit:?} at time {time:?}")]
    DuplicateCell { unit: String, time: String },
    #[error("non-numeric value {value:?} in column {column:?} (line {line})")]
    NonNumericValue {
        column: String,
        line: usize,
        value: String,
    },
    #[error("column {0:?} not found")]
    MissingColumn(String),
    #[error("unit {0:?} in peer file is not in the panel")]
    UnknownUnit(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] peer_ar::Error),
}

impl CliError {
    /// 3 for numerical failures inside the test, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}
