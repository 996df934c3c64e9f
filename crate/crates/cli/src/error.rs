use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] sitgraph::Error),

    #[error("cli: config {path}: {msg}")]
    Config { path: PathBuf, msg: String },

    #[error("cli: no {what} at {path}; {hint}")]
    MissingInput {
        what: &'static str,
        path: PathBuf,
        hint: &'static str,
    },

    #[error("cli: {0}")]
    Invalid(String),

    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// The message on a single line, as printed by the binary.
    pub fn one_line(&self) -> String {
        self.to_string().split_whitespace().collect::<Vec<_>>().join(" ")
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Fails with [`CliError::MissingInput`] unless `path` exists.
pub fn require(path: &Path, what: &'static str, hint: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingInput {
            what,
            path: path.to_path_buf(),
            hint,
        })
    }
}
