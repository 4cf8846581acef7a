use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("invalid texton bank: {0}")]
    InvalidBank(String),

    #[error("invalid latent: {0}")]
    InvalidLatent(String),

    #[error("invalid phase input: {0}")]
    InvalidPhase(String),

    #[error("invalid batch: {0}")]
    InvalidBatch(String),

    #[error("invalid count: {0}")]
    InvalidCount(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported resolution {requested}: {reason}")]
    UnsupportedResolution { requested: usize, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("texture rejected by criterion {criterion}: {detail}")]
    Rejected { criterion: u8, detail: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("checkpoint integrity error in section `{section}`: {detail}")]
    Integrity { section: String, detail: String },

    #[error("structure mismatch: {0}")]
    StructureMismatch(String),

    #[error("image error for {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::InvalidParameter(_)
            | Error::InvalidCount(_)
            | Error::UnsupportedResolution { .. }
            | Error::StructureMismatch(_) => 2,
            Error::Numerical(_) => 4,
            _ => 3,
        }
    }
}
