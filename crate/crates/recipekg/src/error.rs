use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Malformed text input, with a 1-based line number.
    #[error("{origin}:{line}: {message}")]
    Parse {
        origin: String,
        line: usize,
        message: String,
    },
    /// Malformed binary input or inconsistent headers.
    #[error("{origin}: {message}")]
    Format { origin: String, message: String },
    #[error(transparent)]
    Core(#[from] recipekg_core::Error),
    /// Bad flag value or config entry; reported with exit code 2.
    #[error("{0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn parse_err(origin: &str, line: usize, message: impl ToString) -> Error {
    Error::Parse {
        origin: origin.to_string(),
        line,
        message: message.to_string(),
    }
}

pub(crate) fn format_err(origin: &str, message: impl ToString) -> Error {
    Error::Format {
        origin: origin.to_string(),
        message: message.to_string(),
    }
}
