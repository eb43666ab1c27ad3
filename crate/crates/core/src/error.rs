use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("frequency {frequency} GHz outside the spectrum [{min}, {max}] GHz")]
    OutOfRange { frequency: f64, min: f64, max: f64 },

    #[error("invalid transmon parameters: {0}")]
    InvalidParams(String),

    #[error("fit diverged: final residual {final_rms} >= initial residual {initial_rms}")]
    FitDiverged { initial_rms: f64, final_rms: f64 },

    #[error("insufficient data: {points} points for {free} free parameters")]
    InsufficientData { points: usize, free: usize },

    #[error("matrix is singular or ill-conditioned (condition number {condition:e})")]
    SingularMatrix { condition: f64 },

    #[error("{0} is not a perfect square")]
    NotPerfectSquare(usize),

    #[error("diagonal entry {0} is zero")]
    ZeroDiagonal(usize),

    #[error("objective or gradient became non-finite at iteration {iteration}")]
    NonFiniteObjective { iteration: usize },

    #[error("target constraints unsatisfiable after {restarts} restarts")]
    ConstraintsUnsatisfiable { restarts: usize },

    #[error("design matrix is rank deficient ({rows} samples, {cols} unknowns)")]
    RankDeficient { rows: usize, cols: usize },

    #[error("degenerate data for qubit {0}: regressor has no spread")]
    DegenerateData(usize),

    #[error("training aborted: {failed} failed rounds while collecting {requested}")]
    TrainingAborted { failed: usize, requested: usize },

    #[error("row {row}: {source}")]
    Row {
        row: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
