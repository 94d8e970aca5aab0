use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error category, used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Domain,
    Detection,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("coil geometry: turn {turn} has non-positive width {width_um} um")]
    TurnWidth { turn: usize, width_um: f64 },
    #[error("coil geometry: {0}")]
    Geometry(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("domain: {0}")]
    Domain(String),
    #[error("detection failure: {0}")]
    Detection(String),
    #[error("{axis} = {value}: {source}")]
    SweepPoint {
        axis: String,
        value: f64,
        #[source]
        source: Box<Error>,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: malformed data: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::TurnWidth { .. } | Error::Geometry(_) | Error::Config(_) => ErrorKind::Config,
            Error::Domain(_) => ErrorKind::Domain,
            Error::Detection(_) => ErrorKind::Detection,
            Error::SweepPoint { source, .. } => source.kind(),
            Error::Io { .. } | Error::Format { .. } => ErrorKind::Io,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
