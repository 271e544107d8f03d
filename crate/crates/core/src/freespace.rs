//! Binary freespace maps.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ByteImage;
use crate::pnm;

/// Binary `w x h` raster, row-major, origin top-left. `1` is free space,
/// `0` is obstacle or background.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FreespaceMap {
    width: usize,
    height: usize,
    cells: Vec<u8>,
}

impl FreespaceMap {
    pub fn all_free(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            cells: vec![1; width * height],
        }
    }

    pub fn all_obstacle(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            cells: vec![0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut free: impl FnMut(usize, usize) -> bool) -> Self {
        let mut cells = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                cells.push(u8::from(free(u, v)));
            }
        }
        Self { width, height, cells }
    }

    /// Builds a map from cells that must already be 0 or 1.
    pub fn from_cells(width: usize, height: usize, cells: Vec<u8>) -> Result<Self> {
        if cells.len() != width * height {
            return Err(Error::Shape(format!(
                "{} cells for a {width}x{height} map",
                cells.len()
            )));
        }
        if let Some(bad) = cells.iter().find(|&&c| c > 1) {
            return Err(Error::Format {
                format: "freespace map",
                reason: format!("non-binary cell value {bad}"),
            });
        }
        Ok(Self { width, height, cells })
    }

    /// Thresholds 8-bit samples: `>= 128` is free.
    pub fn from_gray(gray: &ByteImage) -> Result<Self> {
        gray.ensure_channels(1)?;
        Ok(Self {
            width: gray.width(),
            height: gray.height(),
            cells: gray.data().iter().map(|&v| u8::from(v >= 128)).collect(),
        })
    }

    /// Free cells as 255, obstacle cells as 0.
    pub fn to_gray(&self) -> ByteImage {
        ByteImage::from_vec(
            self.width,
            self.height,
            1,
            self.cells.iter().map(|&c| c * 255).collect(),
        )
        .expect("map dimensions are consistent")
    }

    pub fn read_pgm(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_gray(&pnm::read(path)?)
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        pnm::write(path, &self.to_gray())
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
    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    #[inline]
    pub fn in_bounds(&self, u: i64, v: i64) -> bool {
        u >= 0 && v >= 0 && (u as usize) < self.width && (v as usize) < self.height
    }

    /// Cell at `(u, v)`; panics when out of bounds.
    #[inline]
    pub fn is_free(&self, u: usize, v: usize) -> bool {
        self.cells[v * self.width + u] == 1
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, free: bool) {
        self.cells[v * self.width + u] = u8::from(free);
    }

    pub fn free_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c == 1).count()
    }
}
