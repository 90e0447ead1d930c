use alloc::string::String;

/// Errors raised by the algorithmic core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("entity `{0}` has no recognised kind prefix")]
    UnknownKind(String),
    #[error("relation `{relation}` does not accept `{entity}` as {side}")]
    Signature {
        relation: String,
        entity: String,
        side: &'static str,
    },
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("id {0} out of range")]
    IdOutOfRange(usize),
    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("missing embedding for `{0}`")]
    MissingEmbedding(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("no candidates left after filtering")]
    EmptyCandidates,
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Shape { expected, found })
    }
}
