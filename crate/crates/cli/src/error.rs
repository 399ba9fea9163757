use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey { line: usize, section: String, key: String },
    #[error("invalid sweep spec: {0}")]
    InvalidSpec(String),
    #[error("cannot read {path}: {source}")]
    Input { path: PathBuf, source: io::Error },
    #[error("cannot write {path}: {source}")]
    OutputUnwritable { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::UnknownKey { .. } | CliError::InvalidSpec(_) => {
                exit::INVALID_INPUT
            }
            CliError::Input { .. } | CliError::OutputUnwritable { .. } => exit::IO_FAILURE,
        }
    }

    pub fn unwritable(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::OutputUnwritable { path, source }
    }
}

pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const INVALID_INPUT: i32 = 2;
    pub const NUMERICAL_FAILURE: i32 = 3;
    pub const IO_FAILURE: i32 = 4;
}
