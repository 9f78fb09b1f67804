use crate::error::{Error, Result};

pub const MIN_SIDE: usize = 8;

/// 8-bit RGB raster, row-major, channels interleaved.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if height < MIN_SIDE || width < MIN_SIDE {
            return Err(Error::Config(format!(
                "image must be at least {MIN_SIDE}x{MIN_SIDE}, got {height}x{width}"
            )));
        }
        if pixels.len() != height * width * 3 {
            return Err(Error::Shape(format!(
                "{}x{} RGB image needs {} bytes, got {}",
                height,
                width,
                height * width * 3,
                pixels.len()
            )));
        }
        Ok(Image { height, width, pixels })
    }

    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Result<Self> {
        let pixels = rgb.iter().copied().cycle().take(height * width * 3).collect();
        Image::new(height, width, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn get(&self, y: usize, x: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, y: usize, x: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Per-channel sums.
    pub fn channel_sums(&self) -> [u64; 3] {
        let mut s = [0u64; 3];
        for px in self.pixels.chunks_exact(3) {
            for c in 0..3 {
                s[c] += px[c] as u64;
            }
        }
        s
    }

    /// Mean squared per-pixel distance, in channel units.
    pub fn mean_l2_distance(&self, other: &Image) -> f64 {
        assert_eq!(
            (self.height, self.width),
            (other.height, other.width),
            "distance between differently sized images"
        );
        let total: f64 = self
            .pixels
            .chunks_exact(3)
            .zip(other.pixels.chunks_exact(3))
            .map(|(a, b)| (0..3).map(|c| (a[c] as f64 - b[c] as f64).powi(2)).sum::<f64>().sqrt())
            .sum();
        total / (self.height * self.width) as f64
    }

    /// Float view `[h][w][3]` in `0..=255`.
    pub(crate) fn to_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&v| v as f64).collect()
    }

    /// Re-quantizes a float buffer by rounding and clamping to `0..=255`.
    pub(crate) fn from_f64(height: usize, width: usize, data: &[f64]) -> Image {
        let pixels = data.iter().map(|&v| quantize(v)).collect();
        Image { height, width, pixels }
    }
}

pub(crate) fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}
