use thiserror::Error;

use crate::model::{Block, Variant};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch between {left} and {right}: {detail}")]
    DimensionMismatch {
        left: &'static str,
        right: &'static str,
        detail: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("power iteration did not converge after {0} iterations (ill-conditioned input)")]
    NoConvergence(usize),

    #[error("block {block} is not active for variant {variant}")]
    InactiveBlock { block: Block, variant: Variant },

    #[error("non-finite gradient for block {block} at iteration {iteration}")]
    NonFiniteGradient { block: Block, iteration: usize },

    #[error("objective increased from {previous:e} to {current:e} at iteration {iteration}")]
    ObjectiveIncrease {
        iteration: usize,
        previous: f64,
        current: f64,
    },

    #[error("infeasible state: {0}")]
    Infeasible(String),

    #[error("rank-deficient data: residual vanished after {found} of {requested} endmembers")]
    RankDeficient { found: usize, requested: usize },

    #[error("band {0} has zero mean")]
    ZeroMeanBand(usize),

    #[error("unknown texture kind `{0}`")]
    UnknownTexture(String),

    #[error("column {0} is identically zero")]
    ZeroColumn(usize),

    #[error("{0} contains non-finite values")]
    NonFiniteData(&'static str),
}

impl Error {
    pub(crate) fn dims(left: &'static str, right: &'static str, detail: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            left,
            right,
            detail: detail.into(),
        }
    }
}
