use std::path::PathBuf;

/// Failure of a command, grouped into classes with distinct exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config {file}: {msg}")]
    ConfigFile { file: PathBuf, msg: String },

    #[error(transparent)]
    Core(#[from] temo_core::Error),

    #[error("artifact {0} was not written")]
    MissingArtifact(PathBuf),
}

pub mod exit_code {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const IO: i32 = 4;
    pub const SCENE: i32 = 5;
    pub const NUMERIC: i32 = 6;
    pub const CHECKPOINT: i32 = 7;
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use temo_core::Error as E;
        match self {
            CliError::ConfigFile { .. } => exit_code::CONFIG,
            CliError::MissingArtifact(_) => exit_code::OTHER,
            CliError::Core(e) => match e {
                E::Config { .. } | E::InvalidArgument(_) => exit_code::CONFIG,
                E::Io { .. } => exit_code::IO,
                E::NoNounPhrase(_) | E::CountMismatch { .. } | E::Parse { .. } | E::EmptyMesh | E::Degenerate(_) => {
                    exit_code::SCENE
                }
                E::NonFinite { .. } | E::NonFiniteLoss(_) | E::DivisionByZero { .. } => exit_code::NUMERIC,
                E::Shape { .. } | E::Json(_) | E::MissingKey(_) => exit_code::CHECKPOINT,
                _ => exit_code::OTHER,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
