use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("unit mismatch: expected {expected:?}, got {got:?}")]
    UnitMismatch {
        expected: crate::grid::Unit,
        got: crate::grid::Unit,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value at pixel ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("invalid source model: {0}")]
    InvalidSource(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("covariance synthesis failed: {0}")]
    Covariance(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("training diverged (loss not finite) at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("inpainting failed: {0}")]
    Inpaint(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing artifact for stage `{stage}`: {path}")]
    MissingArtifact { stage: String, path: String },

    #[error("corpus verification failed: {0}")]
    CorpusVerify(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code buckets used by the CLI: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Diverged { .. } | Error::Covariance(_) | Error::Inpaint(_) => 3,
            _ => 2,
        }
    }
}
