//! Media plumbing: content-addressed storage, decoded still images, and
//! video decoders that turn clip bytes into frames at requested timestamps.

mod ffmpeg;
mod image;
mod store;

pub use self::ffmpeg::{parse_ffprobe_json, FfmpegDecoder};
pub use self::image::{Frame, Image};
pub use self::store::{DirStore, MediaStore, MemoryStore};

use crate::error::{MediaError, ValidationError};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::sync::Arc;

/// SHA-256 digest (lowercase hex) identifying a stored media object.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MediaRef(String);

impl MediaRef {
    pub fn digest_of(bytes: &[u8]) -> Self {
        MediaRef(hex::encode(Sha256::digest(bytes)))
    }

    pub fn parse(s: &str) -> Result<Self, ValidationError> {
        if s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            Ok(MediaRef(s.to_string()))
        } else {
            Err(ValidationError::new("media_ref", format!("{s:?} is not a sha-256 hex digest")))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for MediaRef {
    type Error = ValidationError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        MediaRef::parse(&s)
    }
}

impl From<MediaRef> for String {
    fn from(r: MediaRef) -> String {
        r.0
    }
}

impl fmt::Display for MediaRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Stream properties reported by a decoder probe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClipInfo {
    pub duration: f64,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
}

/// Decodes one container format.
pub trait VideoDecoder: Send + Sync {
    /// Cheap check whether these bytes look like this decoder's format.
    fn accepts(&self, media: &[u8]) -> bool;

    fn probe(&self, media: &[u8]) -> Result<ClipInfo, MediaError>;

    /// Returns, for every requested timestamp, the nearest decoded frame.
    fn frames_at(&self, media: &[u8], timestamps: &[f64]) -> Result<Vec<Frame>, MediaError>;
}

/// Dispatches to the first decoder that accepts the bytes.
#[derive(Clone, Default)]
pub struct DecoderChain {
    decoders: Vec<Arc<dyn VideoDecoder>>,
}

impl DecoderChain {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, decoder: Arc<dyn VideoDecoder>) -> Self {
        self.decoders.push(decoder);
        self
    }

    fn pick(&self, media: &[u8]) -> Result<&Arc<dyn VideoDecoder>, MediaError> {
        if media.is_empty() {
            return Err(MediaError::Unsupported("empty media".into()));
        }
        self.decoders
            .iter()
            .find(|d| d.accepts(media))
            .ok_or_else(|| MediaError::Unsupported("no decoder accepts this media".into()))
    }
}

impl VideoDecoder for DecoderChain {
    fn accepts(&self, media: &[u8]) -> bool {
        self.pick(media).is_ok()
    }

    fn probe(&self, media: &[u8]) -> Result<ClipInfo, MediaError> {
        self.pick(media)?.probe(media)
    }

    fn frames_at(&self, media: &[u8], timestamps: &[f64]) -> Result<Vec<Frame>, MediaError> {
        self.pick(media)?.frames_at(media, timestamps)
    }
}
