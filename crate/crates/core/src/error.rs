use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("quadrature insufficient: orthonormality defect {defect:.3e} exceeds tolerance {tol:.3e}")]
    QuadratureInsufficient { defect: f64, tol: f64 },

    #[error("simulation diverged at step {step} of path {path}")]
    SimulationDiverged { path: usize, step: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
