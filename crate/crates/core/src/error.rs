use std::path::PathBuf;

/// Errors raised by the library. Every message is prefixed with the module
/// that produced it so the CLI can surface them verbatim.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("graph: {path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{module}: {msg}")]
    Validation { module: &'static str, msg: String },

    #[error("{module}: node index {index} out of range (n = {n})")]
    IndexOutOfRange {
        module: &'static str,
        index: usize,
        n: usize,
    },

    #[error("{module}: invalid parameter: {msg}")]
    Parameter { module: &'static str, msg: String },

    #[error("{module}: edge ({source_node}, {target}) not in graph")]
    MissingEdge {
        module: &'static str,
        source_node: u32,
        target: u32,
    },

    #[error("{module}: {msg}")]
    State { module: &'static str, msg: String },

    #[error("{module}: {msg}")]
    Format { module: &'static str, msg: String },

    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn validation(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Validation {
            module,
            msg: msg.into(),
        }
    }

    pub(crate) fn param(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Parameter {
            module,
            msg: msg.into(),
        }
    }

    pub(crate) fn state(module: &'static str, msg: impl Into<String>) -> Self {
        Error::State {
            module,
            msg: msg.into(),
        }
    }

    pub(crate) fn format(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Format {
            module,
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
