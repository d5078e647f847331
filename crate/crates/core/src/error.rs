use thiserror::Error;

/// Every failure the library reports.
#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("field layout mismatch: {0}")]
    Layout(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("solver did not converge: {0}")]
    NotConverged(String),
    #[error("solver: {0}")]
    Solver(String),
    #[error("evaluation inside pole guard: omega^2 = {omega_sq} is within {guard} of resonance {alpha}")]
    PoleGuard { omega_sq: f64, alpha: f64, guard: f64 },
    #[error("matrix not symmetric: asymmetry {0:e}")]
    Asymmetric(f64),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
