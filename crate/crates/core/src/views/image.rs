use crate::error::{Error, Result};

/// Channel-planar image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    channels: usize,
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::shape(
                "image",
                format!("empty extent {channels}x{height}x{width}"),
            ));
        }
        if pixels.len() != channels * height * width {
            return Err(Error::shape(
                "image",
                format!(
                    "{channels}x{height}x{width} needs {} values, got {}",
                    channels * height * width,
                    pixels.len()
                ),
            ));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::shape(
                "image",
                format!("pixel value {v} outside [0, 1]"),
            ));
        }
        Ok(Image {
            channels,
            height,
            width,
            pixels,
        })
    }

    pub fn from_bytes(channels: usize, height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(
            channels,
            height,
            width,
            bytes.iter().map(|&b| b as f32 / 255.0).collect(),
        )
    }

    /// Constructor for transform outputs whose range is guaranteed by
    /// construction.
    pub(crate) fn from_parts(
        channels: usize,
        height: usize,
        width: usize,
        pixels: Vec<f32>,
    ) -> Self {
        debug_assert_eq!(pixels.len(), channels * height * width);
        Image {
            channels,
            height,
            width,
            pixels,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.pixels[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, r: usize, col: usize) -> f32 {
        self.pixels[(c * self.height + r) * self.width + col]
    }

    /// Pixel values quantized back to bytes (round to nearest).
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }
}
