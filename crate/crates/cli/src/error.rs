use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Input {
        path: String,
        #[source]
        source: uncertain_eval::Error,
    },
    #[error(transparent)]
    Core(#[from] uncertain_eval::Error),
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write output: {0}")]
    Write(#[from] std::io::Error),
    #[error("numerical degeneracy: {0}")]
    Degenerate(String),
}

impl CliError {
    /// 0 success, 1 output failure, 2 usage or input error, 3 degeneracy under `--strict`.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Write(_) => 1,
            CliError::Degenerate(_) => 3,
            _ => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
