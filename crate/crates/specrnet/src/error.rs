use std::io;
use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] specrnet_core::Error),
    #[error("{}: malformed WAV: {reason}", path.display())]
    MalformedWav { path: PathBuf, reason: String },
    #[error("{}: unsupported encoding: {reason}", path.display())]
    UnsupportedEncoding { path: PathBuf, reason: String },
    #[error("cannot read {}: {source}", path.display())]
    ReadData { path: PathBuf, source: io::Error },
    #[error("no directory in the layout is mapped to \"bonafide\"")]
    NoBonafideDir,
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("invalid manifest {}: {reason}", path.display())]
    InvalidManifest { path: PathBuf, reason: String },
    #[error("split {0} is empty")]
    EmptySplit(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown protocol {0:?}")]
    UnknownProtocol(String),
    #[error("excluded attack {0:?} reached the model")]
    ExcludedAttack(String),
    #[error("checkpoint {}: {source}", path.display())]
    Checkpoint { path: PathBuf, source: specrnet_core::Error },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Process exit statuses of the command-line tool.
pub mod exit {
    pub const OK: u8 = 0;
    pub const USAGE: u8 = 1;
    pub const DATA: u8 = 2;
    pub const RUNTIME: u8 = 3;
}

impl Error {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        Error::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn read(path: impl AsRef<Path>, source: io::Error) -> Self {
        Error::ReadData { path: path.as_ref().to_path_buf(), source }
    }

    /// Exit status for this error: 2 for problems with the input data,
    /// 1 for bad invocations, 3 for everything else.
    pub fn exit_code(&self) -> u8 {
        use specrnet_core::Error as C;
        match self {
            Error::MalformedWav { .. }
            | Error::UnsupportedEncoding { .. }
            | Error::ReadData { .. }
            | Error::NoBonafideDir
            | Error::InvalidLayout(_)
            | Error::InvalidManifest { .. }
            | Error::EmptySplit(_) => exit::DATA,
            Error::Core(
                C::MissingClass(_) | C::SingleClass | C::EmptyClip | C::EmptyAfterTrim | C::InvalidRatios(_),
            ) => exit::DATA,
            Error::InvalidConfig(_) | Error::UnknownProtocol(_) | Error::Json(_) => exit::USAGE,
            _ => exit::RUNTIME,
        }
    }
}
