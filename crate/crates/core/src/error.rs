use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid dimensions: {0}")]
    Dimension(String),

    #[error("rank deficient operator: {0}")]
    RankDeficient(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sensor rows are not orthonormal; the separable fast path does not apply")]
    NotOrthogonal,

    #[error("dense expansion of {n} unknowns exceeds the limit of {limit}")]
    SizeGuard { n: usize, limit: usize },

    #[error("sampler diverged at t = {t}: |x_t| = {norm:e}")]
    Divergence { t: usize, norm: f64 },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("unsupported format: {0}")]
    Unsupported(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(
        context: &'static str,
        expected: impl ToString,
        found: impl ToString,
    ) -> Self {
        Error::ShapeMismatch {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
