use super::MbdError;
use crate::geometry::PixelSpan;

/// RGB raster, row-major, native 0-255 intensities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImagePatch {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl ImagePatch {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self, MbdError> {
        if width == 0 || height == 0 {
            return Err(MbdError::EmptyPatch);
        }
        if pixels.len() != width * height {
            return Err(MbdError::PixelCount {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        Ok(Self { width, height, pixels })
    }

    /// Grayscale values replicated to three channels.
    pub fn from_gray(width: usize, height: usize, gray: &[u8]) -> Result<Self, MbdError> {
        Self::new(width, height, gray.iter().map(|&v| [v, v, v]).collect())
    }

    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Result<Self, MbdError> {
        Self::new(width, height, vec![color; width * height])
    }

    /// Interleaved `RGBRGB...` bytes.
    pub fn from_rgb_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self, MbdError> {
        if bytes.len() != width * height * 3 {
            return Err(MbdError::PixelCount {
                expected: width * height * 3,
                actual: bytes.len(),
            });
        }
        Self::new(
            width,
            height,
            bytes.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: [u8; 3]) {
        self.pixels[y * self.width + x] = value;
    }

    /// Copies out `[x0, x1) x [y0, y1)`.
    pub fn crop(&self, span: PixelSpan) -> Result<Self, MbdError> {
        if span.x1 > self.width || span.y1 > self.height || span.width() == 0 || span.height() == 0
        {
            return Err(MbdError::CropOutOfBounds {
                span: (span.x0, span.y0, span.x1, span.y1),
                width: self.width,
                height: self.height,
            });
        }
        let mut pixels = Vec::with_capacity(span.width() * span.height());
        for y in span.y0..span.y1 {
            let row = y * self.width;
            pixels.extend_from_slice(&self.pixels[row + span.x0..row + span.x1]);
        }
        Self::new(span.width(), span.height(), pixels)
    }

    /// Adds `delta` to every channel; `None` if any value would leave `[0, 255]`.
    pub fn shifted(&self, delta: i16) -> Option<Self> {
        let mut pixels = Vec::with_capacity(self.pixels.len());
        for px in &self.pixels {
            let mut out = [0u8; 3];
            for (o, &v) in out.iter_mut().zip(px) {
                *o = u8::try_from(v as i16 + delta).ok()?;
            }
            pixels.push(out);
        }
        Some(Self { pixels, ..*self })
    }

    /// Number of distinct values seen in each channel.
    pub fn channel_levels(&self) -> [usize; 3] {
        let mut seen = [[false; 256]; 3];
        for px in &self.pixels {
            for c in 0..3 {
                seen[c][px[c] as usize] = true;
            }
        }
        seen.map(|s| s.iter().filter(|&&b| b).count())
    }
}
