use thiserror::Error;

/// A constructor or deserializer rejected a value because one of its
/// invariants did not hold. `field` names the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid {field}: {reason}")]
pub struct ValidationError {
    pub field: String,
    pub reason: String,
}

impl ValidationError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub(crate) fn ensure(cond: bool, field: &str, reason: impl FnOnce() -> String) -> Result<(), ValidationError> {
    if cond {
        Ok(())
    } else {
        Err(ValidationError::new(field, reason()))
    }
}

/// Failures while storing, reading or decoding media.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MediaError {
    #[error("media object {0} not found")]
    NotFound(String),
    #[error("unsupported media: {0}")]
    Unsupported(String),
    #[error("media decode failed: {0}")]
    Decode(String),
    #[error("frame extractor unavailable: {0}")]
    ExtractorUnavailable(String),
    #[error("media i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for MediaError {
    fn from(e: std::io::Error) -> Self {
        MediaError::Io(e.to_string())
    }
}

/// Failures surfaced by a model adapter.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdapterError {
    #[error("adapter unavailable: {0}")]
    Unavailable(String),
    #[error("malformed model response: {0}")]
    MalformedResponse(String),
    #[error("request rejected by content policy: {0}")]
    ContentPolicy(String),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Media(#[from] MediaError),
}
