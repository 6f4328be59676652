use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the estimators, the oracle and the simulation harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("window integral needs at least 2 samples, got {0}")]
    ShortWindow(usize),

    #[error("numerical divergence at t = {t}: state {state:?}")]
    Divergence {
        t: f64,
        state: Vec<f64>,
        /// Index of the last metrics record that was produced before the abort.
        last_record: Option<usize>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("Riccati problem is not solvable: {0}")]
    Domain(String),

    #[error("Riccati solver did not reach tolerance (residual {residual:e})")]
    Convergence { residual: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension(format!(
            "{context}: expected length {expected}, got {found}"
        )));
    }
    Ok(())
}

pub(crate) fn check_shape(
    context: &str,
    expected: (usize, usize),
    found: (usize, usize),
) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension(format!(
            "{context}: expected {}x{}, got {}x{}",
            expected.0, expected.1, found.0, found.1
        )));
    }
    Ok(())
}

pub(crate) fn check_finite(context: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(context))
    }
}
