use thiserror::Error;

use crate::fixed_point::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid mode set: {0}")]
    InvalidModes(String),

    #[error("fields live on different grids or mode sets")]
    Mismatch,

    #[error("operand is not mean-zero (k = 0 coefficient present at time index {time_index})")]
    NotMeanZero { time_index: usize },

    #[error("degenerate decay fit: {modes} modes above the noise floor")]
    DegenerateFit { modes: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid problem data: {0}")]
    InvalidData(String),

    #[error("iteration did not converge after {} iterations (last update norm {:.3e})", .report.iterations, .report.last_update())]
    NotConverged { report: Box<SolveReport> },

    #[error("time-stepping oracle did not converge after {sweeps} sweeps (last change {difference:.3e})")]
    OracleNotConverged { sweeps: usize, difference: f64 },
}
