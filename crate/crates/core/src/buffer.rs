//! Owned 8-bit RGB raster used throughout the pipeline.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, RgbImage};

use crate::error::ImageError;

/// Smallest accepted width/height. Below this the SSIM window and the blur
/// kernel cover a large share of the frame.
pub const MIN_DIMENSION: u32 = 64;

/// Row-major interleaved RGB, 8 bits per sample.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl std::fmt::Debug for ImageBuffer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImageBuffer")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImageError> {
        if width < MIN_DIMENSION || height < MIN_DIMENSION {
            return Err(ImageError::TooSmall {
                width,
                height,
                min: MIN_DIMENSION,
            });
        }
        if data.len() != width as usize * height as usize * 3 {
            return Err(ImageError::Length {
                width,
                height,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(
        width: u32,
        height: u32,
        mut f: impl FnMut(u32, u32) -> [u8; 3],
    ) -> Result<Self, ImageError> {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    /// Loads a JPEG/PNG file. Grayscale sources are expanded to three
    /// identical channels.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| ImageError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::decode(&bytes)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ImageError> {
        let rgb = image::load_from_memory(bytes)?.to_rgb8();
        Self::from_rgb_image(rgb)
    }

    pub fn from_rgb_image(rgb: RgbImage) -> Result<Self, ImageError> {
        let (w, h) = rgb.dimensions();
        Self::new(w, h, rgb.into_raw())
    }

    pub fn to_rgb_image(&self) -> RgbImage {
        RgbImage::from_raw(self.width, self.height, self.data.clone())
            .expect("dimensions validated at construction")
    }

    pub fn encode_png(&self) -> Vec<u8> {
        let mut out = Cursor::new(Vec::new());
        self.to_rgb_image()
            .write_to(&mut out, ImageFormat::Png)
            .expect("png encoding into memory cannot fail");
        out.into_inner()
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        let path = path.as_ref();
        std::fs::write(path, self.encode_png()).map_err(|source| ImageError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Bilinear resample to the given size.
    pub fn resize_bilinear(&self, width: u32, height: u32) -> Result<Self, ImageError> {
        let resized = image::imageops::resize(
            &self.to_rgb_image(),
            width,
            height,
            image::imageops::FilterType::Triangle,
        );
        Self::from_rgb_image(resized)
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = &[u8]> {
        self.data.chunks_exact(3)
    }

    pub(crate) fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn same_dimensions(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_and_bad_length() {
        assert!(matches!(
            ImageBuffer::new(63, 64, vec![0; 63 * 64 * 3]),
            Err(ImageError::TooSmall { .. })
        ));
        assert!(matches!(
            ImageBuffer::new(64, 64, vec![0; 10]),
            Err(ImageError::Length { .. })
        ));
    }

    #[test]
    fn png_round_trip_and_gray_expansion() {
        let img = ImageBuffer::from_fn(64, 70, |x, y| [x as u8, y as u8, (x ^ y) as u8]).unwrap();
        assert_eq!(ImageBuffer::decode(&img.encode_png()).unwrap(), img);

        let gray = image::GrayImage::from_fn(64, 64, |x, _| image::Luma([x as u8 * 3]));
        let mut bytes = Cursor::new(Vec::new());
        gray.write_to(&mut bytes, ImageFormat::Png).unwrap();
        let rgb = ImageBuffer::decode(bytes.get_ref()).unwrap();
        assert_eq!(rgb.pixel(10, 5), [30, 30, 30]);
    }
}
