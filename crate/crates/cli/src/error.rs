use std::path::PathBuf;

use mrmod_core::ErrorKind;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {msg}", path.display())]
    Parse { path: PathBuf, msg: String },
    #[error("{}: `{command}` needs a [{section}] section", path.display())]
    MissingSection { path: PathBuf, command: &'static str, section: &'static str },
    /// Core error raised while resolving or running a config section.
    #[error("{}{}: {source}", path.display(), line.map(|l| format!(":{l}")).unwrap_or_default())]
    Section {
        path: PathBuf,
        line: Option<usize>,
        #[source]
        source: mrmod_core::Error,
    },
    #[error(transparent)]
    Core(#[from] mrmod_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("located voxel ({ix}, {iy}) is not significant: Bonferroni p = {bonferroni_p} >= alpha {alpha}")]
    NotDetected { ix: usize, iy: usize, bonferroni_p: f64, alpha: f64 },
}

pub type Result<T> = std::result::Result<T, CliError>;

pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DOMAIN: i32 = 3;
pub const EXIT_DETECTION: i32 = 4;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        let kind = |e: &mrmod_core::Error| match e.kind() {
            ErrorKind::Config => EXIT_CONFIG,
            ErrorKind::Domain => EXIT_DOMAIN,
            ErrorKind::Detection => EXIT_DETECTION,
            ErrorKind::Io => EXIT_IO,
        };
        match self {
            CliError::Parse { .. } | CliError::MissingSection { .. } => EXIT_CONFIG,
            CliError::Section { source, .. } | CliError::Core(source) => kind(source),
            CliError::Io { .. } => EXIT_IO,
            CliError::NotDetected { .. } => EXIT_DETECTION,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}
