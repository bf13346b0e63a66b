use crate::error::{Error, Result};

/// A 16-bit grayscale detector frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeckleFrame {
    height: usize,
    width: usize,
    pixels: Vec<u16>,
}

impl SpeckleFrame {
    pub fn new(height: usize, width: usize, pixels: Vec<u16>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Invalid(format!(
                "frame dimensions must be positive, got {height}x{width}"
            )));
        }
        let expected = height
            .checked_mul(width)
            .ok_or_else(|| Error::Invalid("frame size overflows".into()))?;
        if pixels.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: pixels.len(),
            });
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.pixels[row * self.width + col]
    }

    pub fn into_pixels(self) -> Vec<u16> {
        self.pixels
    }
}
