use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("mask has no set pixels")]
    EmptyMask,

    /// The second-moment matrix is too close to isotropic for its principal
    /// axis to carry orientation information.
    #[error("near-isotropic moments (eigenvalue ratio {ratio:.4})")]
    Isotropic { ratio: f64 },

    #[error("format error in {context}: {message}")]
    Format { context: String, message: String },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("pairing error: {0}")]
    Pairing(String),

    #[error("oracle selection requires a ground-truth box")]
    MissingGroundTruth,

    #[error("config error: {0}")]
    Config(String),

    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn format(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
