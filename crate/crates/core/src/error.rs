use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("frame {frame} has zero mean intensity")]
    ZeroMeanFrame { frame: usize },
    #[error("zero variance")]
    ZeroVariance,
    #[error("constant input")]
    ConstantInput,
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("too few pixels survive subsampling ({kept} < 2)")]
    TooFewPixels { kept: usize },
    #[error("covariance factorization failed")]
    Factorization,
    #[error("insufficient points for fit: {have} < {need}")]
    InsufficientPoints { have: usize, need: usize },
    #[error("degenerate raw contrast")]
    DegenerateContrast,
    #[error("degenerate diagonal: {0}")]
    DegenerateDiagonal(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("duplicate ensemble seed {0}")]
    DuplicateSeed(u64),
    #[error("need at least 2 models, got {0}")]
    TooFewModels(usize),
    #[error("no ages left to fit after edge exclusion")]
    EmptyBand,
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
