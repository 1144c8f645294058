use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("no strongly connected placement found after {attempts} attempts (radius {radius} too small?)")]
    Disconnected { attempts: usize, radius: f64 },

    #[error("invalid weights: {0}")]
    Weights(String),

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("invalid problem: {0}")]
    Problem(String),

    #[error("method `{method}`: {reason}")]
    Method { method: String, reason: String },

    #[error("numerical breakdown in `{method}` at round {round}: {detail}")]
    Breakdown { method: String, round: usize, detail: String },

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn method(method: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Method {
            method: method.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
