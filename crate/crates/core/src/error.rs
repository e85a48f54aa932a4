use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the solvers, the simulator and the artifact writers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("scheme stability violated: {0}")]
    SchemeStability(String),

    #[error("numerical failure at time slice {slice}: {detail}")]
    Numerical { slice: usize, detail: String },

    #[error("mesh needs {nodes} nodes (~{bytes} bytes), above the cap of {cap} nodes")]
    Resource {
        nodes: usize,
        bytes: u64,
        cap: usize,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input {path}: {detail}")]
    Parse { path: PathBuf, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
