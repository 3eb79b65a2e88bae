use std::path::PathBuf;

use thiserror::Error;

use crate::tensor::TensorError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    /// A structured input failed to parse; `line` is 1-based.
    #[error("{source_name}:{line}: {message}")]
    Load {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("argument error: {0}")]
    Argument(String),
    #[error("degenerate graph: {0}")]
    DegenerateGraph(String),
    #[error("missing fixture for {0}")]
    MissingFixture(String),
    #[error("state error: {0}")]
    State(String),
    #[error("non-finite loss on example {example_id}: {detail}")]
    NonFiniteLoss { example_id: String, detail: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn load(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Load {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn read_to_string(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &std::path::Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
