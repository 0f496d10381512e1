use crate::adapters::sim::SimVideoDecoder;
use crate::clock::{Clock, SystemClock};
use crate::error::MediaError;
use crate::media::{DecoderChain, Frame, Image, MediaStore, MemoryStore, VideoDecoder};
use crate::model::{ClipId, FrameRef, VideoClip};
use std::sync::Arc;

/// Storage, decoding and time shared by the engine, adapters and sessions.
#[derive(Clone)]
pub struct Env {
    pub store: Arc<dyn MediaStore>,
    pub decoder: Arc<dyn VideoDecoder>,
    pub clock: Arc<dyn Clock>,
}

impl Env {
    pub fn new(store: Arc<dyn MediaStore>, decoder: Arc<dyn VideoDecoder>, clock: Arc<dyn Clock>) -> Self {
        Self { store, decoder, clock }
    }

    /// In-memory store, synthetic-video decoder only, system clock.
    pub fn in_memory() -> Self {
        Self::new(
            Arc::new(MemoryStore::new()),
            Arc::new(DecoderChain::new().with(Arc::new(SimVideoDecoder))),
            Arc::new(SystemClock),
        )
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    /// Stores clip bytes content-addressed and probes them. Storing the
    /// same bytes twice yields the same clip.
    pub fn store_clip(&self, bytes: &[u8]) -> Result<VideoClip, MediaError> {
        if bytes.is_empty() {
            return Err(MediaError::Unsupported("empty upload".into()));
        }
        let info = self.decoder.probe(bytes)?;
        let media = self.store.put(bytes)?;
        VideoClip::new(
            ClipId(media.to_string()),
            media,
            info.duration,
            info.fps,
            info.width,
            info.height,
        )
        .map_err(|e| MediaError::Unsupported(e.to_string()))
    }

    pub fn frame_at(&self, clip: &VideoClip, timestamp: f64) -> Result<Frame, MediaError> {
        let bytes = self.store.get(clip.media_ref())?;
        self.decoder
            .frames_at(&bytes, &[timestamp])?
            .pop()
            .ok_or_else(|| MediaError::Decode(format!("no frame at {timestamp}s")))
    }

    pub fn save_frame(&self, frame: &Frame) -> Result<FrameRef, MediaError> {
        let media = self.store.put(&frame.image.to_png())?;
        FrameRef::new(frame.timestamp, media).map_err(|e| MediaError::Decode(e.to_string()))
    }

    pub fn load_frame(&self, frame: &FrameRef) -> Result<Frame, MediaError> {
        let bytes = self.store.get(frame.media())?;
        Ok(Frame::new(frame.timestamp(), Image::decode(&bytes)?))
    }
}
