use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Table { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] mfpg_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn table(path: &Path, message: impl ToString) -> Self {
        CliError::Table {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    /// Process exit status: 2 for bad input, 3 for numerical failure, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        use mfpg_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Table { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 4,
            CliError::Core(e) => match e {
                E::Io { .. } => 4,
                E::Dimension(_)
                | E::Symmetry { .. }
                | E::Domain(_)
                | E::Argument(_)
                | E::Parse { .. }
                | E::Schema(_) => 2,
                E::Stability { .. }
                | E::Convergence { .. }
                | E::Stabilizability(_)
                | E::Informativity { .. }
                | E::Accuracy(_) => 3,
            },
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
