use crate::error::MediaError;
use image::{ImageFormat, RgbImage};
use std::io::Cursor;
use std::sync::Arc;

/// Decoded RGB8 image buffer.
#[derive(Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    rgb: Vec<u8>,
}

impl std::fmt::Debug for Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Image")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl Image {
    pub fn from_rgb(width: u32, height: u32, rgb: Vec<u8>) -> Result<Self, MediaError> {
        if width == 0 || height == 0 {
            return Err(MediaError::Decode("image has zero extent".into()));
        }
        if rgb.len() != width as usize * height as usize * 3 {
            return Err(MediaError::Decode(format!(
                "rgb buffer of {} bytes does not match {width}x{height}",
                rgb.len()
            )));
        }
        Ok(Self { width, height, rgb })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn rgb(&self) -> &[u8] {
        &self.rgb
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    /// Lossless PNG encoding, used when a frame is persisted.
    pub fn to_png(&self) -> Vec<u8> {
        let img = RgbImage::from_raw(self.width, self.height, self.rgb.clone())
            .expect("buffer length checked at construction");
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Png)
            .expect("png encoding into memory cannot fail");
        out.into_inner()
    }

    /// Decodes any still format the `image` crate was built with.
    pub fn decode(bytes: &[u8]) -> Result<Self, MediaError> {
        let img = image::load_from_memory(bytes).map_err(|e| MediaError::Decode(e.to_string()))?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Image::from_rgb(w, h, rgb.into_raw())
    }
}

/// A decoded frame and the time it was taken from in its clip.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub timestamp: f64,
    pub image: Arc<Image>,
}

impl Frame {
    pub fn new(timestamp: f64, image: Image) -> Self {
        Self {
            timestamp,
            image: Arc::new(image),
        }
    }
}
