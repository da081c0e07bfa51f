use std::path::PathBuf;

use crate::tensor::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left} vs {right}")]
    Dimension {
        op: &'static str,
        left: Shape,
        right: Shape,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("non-finite gradient in parameter `{param}` (step {step})")]
    NonFiniteGradient { param: String, step: usize },

    #[error("function is not deterministic: {first} != {second}")]
    NonDeterministic { first: f64, second: f64 },

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input or configuration rather than
    /// numerical or environmental failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Dimension { .. }
                | Error::Contract(_)
                | Error::Config(_)
                | Error::Lookup(_)
                | Error::Ingestion(_)
                | Error::Schema(_)
                | Error::Format(_)
                | Error::UndefinedMetric(_)
        )
    }
}
