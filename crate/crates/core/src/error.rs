use std::path::PathBuf;

/// Errors produced by the geometry, estimation and I/O layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("registration failed at iteration {iteration}: {reason}")]
    RegistrationFailed { iteration: usize, reason: String },

    #[error("result not converged: {0}")]
    NotConverged(&'static str),

    #[error("invalid depth band ({d1}, {d2})")]
    InvalidBand { d1: f64, d2: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("point behind camera (z = {0})")]
    BehindCamera(f64),

    #[error("malformed IMU stream: {0}")]
    MalformedStream(String),

    #[error("bias correction of norm {norm} exceeds trust region {limit}; re-preintegrate")]
    BiasOutsideTrustRegion { norm: f64, limit: f64 },

    #[error("singular system: {0}")]
    Singular(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
