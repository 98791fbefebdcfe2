use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("structure error: {0}")]
    Structure(String),
    #[error("exposure error: zero exposure with {deaths} deaths (country {country}, year {year}, age {age})")]
    Exposure {
        country: String,
        year: i32,
        age: u32,
        deaths: f64,
    },
    #[error("data gap: missing value for country {country}, year {year}, age {age}")]
    DataGap { country: String, year: i32, age: u32 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("rank error: {0}")]
    Rank(String),
    #[error("power iteration did not converge after {iterations} iterations (last delta {last_delta:e})")]
    Iteration { iterations: usize, last_delta: f64 },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("regression error: {0}")]
    Regression(String),
    #[error("scaling error: feature {feature} has zero standard deviation on the training rows")]
    Scaling { feature: usize },
    #[error("insufficient history: {0}")]
    InsufficientHistory(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Training { epoch: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}
