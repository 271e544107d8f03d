//! Row-major raster buffers with interleaved channels, origin top-left.

use crate::error::{Error, Result};

/// A row-major raster with `channels` interleaved samples per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer<T> {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<T>,
}

/// 8-bit image, gray (1 channel) or RGB (3 channels).
pub type ByteImage = ImageBuffer<u8>;
/// Single-channel floating point plane.
pub type Plane = ImageBuffer<f32>;

impl<T: Copy + Default> ImageBuffer<T> {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![T::default(); width * height * channels],
        }
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: T) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }
}

impl<T: Copy> ImageBuffer<T> {
    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidChannels {
                expected: 3,
                actual: channels,
            });
        }
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "buffer holds {} samples, {}x{}x{} needs {}",
                data.len(),
                width,
                height,
                channels,
                width * height * channels
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds a single-channel image from a per-pixel function.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            channels: 1,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> T {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: T) {
        self.data[(y * self.width + x) * self.channels + c] = value;
    }

    /// Samples of pixel `(x, y)`.
    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[T] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn row(&self, y: usize) -> &[T] {
        let stride = self.width * self.channels;
        &self.data[y * stride..(y + 1) * stride]
    }

    pub fn ensure_channels(&self, expected: usize) -> Result<()> {
        if self.channels == expected {
            Ok(())
        } else {
            Err(Error::InvalidChannels {
                expected,
                actual: self.channels,
            })
        }
    }

    pub fn ensure_min_size(&self, min: usize) -> Result<()> {
        if self.width < min || self.height < min {
            Err(Error::ImageTooSmall {
                width: self.width,
                height: self.height,
                min,
            })
        } else {
            Ok(())
        }
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> ImageBuffer<U> {
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl ByteImage {
    /// Widens a gray image to a single-channel f32 plane.
    pub fn to_plane(&self) -> Result<Plane> {
        self.ensure_channels(1)?;
        Ok(self.map(f32::from))
    }

    /// Replicates a gray image into three channels.
    pub fn gray_to_rgb(&self) -> Result<ByteImage> {
        self.ensure_channels(1)?;
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        ByteImage::from_vec(self.width, self.height, 3, data)
    }
}
