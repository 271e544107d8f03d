//! Gradient kernels, frame normalization and the Laplacian blur factor.
//!
//! All 3x3 filters use replicate padding so every output plane has the same
//! size as its input. Kernels are applied as a sliding-window correlation:
//! `out(x, y) = Σ k[dy+1][dx+1] · in(x+dx, y+dy)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ByteImage, ImageBuffer, Plane};

pub type Kernel3 = [[f32; 3]; 3];

pub const SOBEL_X: Kernel3 = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
pub const SOBEL_Y: Kernel3 = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];
pub const LAPLACIAN: Kernel3 = [[0.0, -1.0, 0.0], [-1.0, 4.0, -1.0], [0.0, -1.0, 0.0]];
pub const IDENTITY: Kernel3 = [[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]];

/// Side length of the network input frame.
pub const NETWORK_INPUT: usize = 224;

/// BT.601 luminance: `Y = round(0.299 R + 0.587 G + 0.114 B)`.
pub fn to_grayscale(rgb: &ByteImage) -> Result<ByteImage> {
    rgb.ensure_channels(3)?;
    let data: Vec<u8> = rgb
        .data()
        .chunks_exact(3)
        .map(|p| {
            let y = 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]);
            // y >= 0, so truncating y + 0.5 rounds half up; `as` saturates at 255
            (y + 0.5) as u8
        })
        .collect();
    ByteImage::from_vec(rgb.width(), rgb.height(), 1, data)
}

/// 3x3 correlation with replicate padding; output has the input's size.
pub fn convolve3x3(img: &Plane, kernel: &Kernel3) -> Result<Plane> {
    let [out] = convolve_many(img, [kernel])?;
    Ok(out)
}

/// Copies row `y` into `buf` with one replicated sample on each side.
fn padded_row(src: &[f32], w: usize, y: usize, buf: &mut [f32]) {
    let row = &src[y * w..(y + 1) * w];
    buf[1..=w].copy_from_slice(row);
    buf[0] = row[0];
    buf[w + 1] = row[w - 1];
}

/// Several 3x3 correlations sharing one pass over the padded rows.
fn convolve_many<const N: usize>(img: &Plane, kernels: [&Kernel3; N]) -> Result<[Plane; N]> {
    img.ensure_channels(1)?;
    img.ensure_min_size(3)?;
    let (w, h) = (img.width(), img.height());
    let src = img.data();
    let mut outs: [Vec<f32>; N] = std::array::from_fn(|_| vec![0.0; w * h]);
    let mut pad = [vec![0.0f32; w + 2], vec![0.0f32; w + 2], vec![0.0f32; w + 2]];
    for y in 0..h {
        for (k, r) in [y.saturating_sub(1), y, (y + 1).min(h - 1)].into_iter().enumerate() {
            padded_row(src, w, r, &mut pad[k]);
        }
        for (out, kernel) in outs.iter_mut().zip(kernels) {
            let dst = &mut out[y * w..(y + 1) * w];
            for (krow, row) in kernel.iter().zip(&pad) {
                let [a, b, c] = *krow;
                for (o, win) in dst.iter_mut().zip(row.windows(3)) {
                    *o += a * win[0] + b * win[1] + c * win[2];
                }
            }
        }
    }
    let mut planes = outs.into_iter().map(|data| Plane::from_vec(w, h, 1, data));
    Ok(std::array::from_fn(|_| {
        planes.next().expect("one plane per kernel").expect("sizes match")
    }))
}

/// Halves both dimensions by averaging each 2x2 block. An odd trailing
/// row or column is dropped.
pub fn downsample2x(img: &Plane) -> Result<Plane> {
    img.ensure_channels(1)?;
    let (w, h) = (img.width() / 2, img.height() / 2);
    if w == 0 || h == 0 {
        return Err(Error::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            min: 2,
        });
    }
    let (sw, src) = (img.width(), img.data());
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let top = &src[2 * y * sw..2 * y * sw + 2 * w];
        let bottom = &src[(2 * y + 1) * sw..(2 * y + 1) * sw + 2 * w];
        out.extend(
            top.chunks_exact(2)
                .zip(bottom.chunks_exact(2))
                .map(|(t, b)| 0.25 * (t[0] + t[1] + b[0] + b[1])),
        );
    }
    Plane::from_vec(w, h, 1, out)
}

/// Auxiliary edge input: Sobel X, Sobel Y and Laplacian at half resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientStack {
    pub sobel_x: Plane,
    pub sobel_y: Plane,
    pub laplacian: Plane,
}

impl GradientStack {
    pub fn width(&self) -> usize {
        self.sobel_x.width()
    }

    pub fn height(&self) -> usize {
        self.sobel_x.height()
    }

    pub fn planes(&self) -> [(&'static str, &Plane); 3] {
        [
            ("sobel_x", &self.sobel_x),
            ("sobel_y", &self.sobel_y),
            ("laplacian", &self.laplacian),
        ]
    }
}

/// Full-resolution Sobel X, Sobel Y and Laplacian responses of a gray image.
pub fn gradient_planes(gray: &ByteImage) -> Result<[Plane; 3]> {
    gray.ensure_channels(1)?;
    convolve_many(&gray.to_plane()?, [&SOBEL_X, &SOBEL_Y, &LAPLACIAN])
}

pub fn gradient_stack(gray: &ByteImage) -> Result<GradientStack> {
    let [sx, sy, lap] = gradient_planes(gray)?;
    Ok(GradientStack {
        sobel_x: downsample2x(&sx)?,
        sobel_y: downsample2x(&sy)?,
        laplacian: downsample2x(&lap)?,
    })
}

/// Maps a signed plane onto 16-bit gray via `[-m, m] -> [0, 65535]`,
/// `m = max |value|`. Returns the samples and `m`; a zero plane maps to the
/// midpoint.
pub fn plane_to_gray16(plane: &Plane) -> (Vec<u16>, f32) {
    let m = plane.data().iter().fold(0.0f32, |acc, v| acc.max(v.abs()));
    let samples = plane
        .data()
        .iter()
        .map(|&v| {
            if m == 0.0 {
                32768
            } else {
                (((v + m) / (2.0 * m)) * 65535.0).round().clamp(0.0, 65535.0) as u16
            }
        })
        .collect();
    (samples, m)
}

/// Dispersion of the Laplacian magnitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlurFactor {
    /// `Σ (|L| - L̄)²` over all pixels (not divided by the pixel count).
    pub beta: f64,
    /// `L̄`, the mean Laplacian magnitude.
    pub beta_mean_abs: f64,
    pub pixel_count: usize,
}

impl BlurFactor {
    /// True variance, `beta / (X·Y)`.
    pub fn normalized(&self) -> f64 {
        if self.pixel_count == 0 {
            0.0
        } else {
            self.beta / self.pixel_count as f64
        }
    }
}

pub fn blur_factor(gray: &ByteImage) -> Result<BlurFactor> {
    gray.ensure_channels(1)?;
    let lap = convolve3x3(&gray.to_plane()?, &LAPLACIAN)?;
    Ok(blur_factor_from_laplacian(&lap))
}

pub fn blur_factor_from_laplacian(lap: &Plane) -> BlurFactor {
    let n = lap.data().len();
    let mean = lap.data().iter().map(|&v| f64::from(v.abs())).sum::<f64>() / n as f64;
    let beta = lap
        .data()
        .iter()
        .map(|&v| {
            let d = f64::from(v.abs()) - mean;
            d * d
        })
        .sum();
    BlurFactor {
        beta,
        beta_mean_abs: mean,
        pixel_count: n,
    }
}

/// Where the network frame came from in the source image.
///
/// The network frame samples source position
/// `(u · scale_x, offset_y + v · scale_y)` for map pixel `(u, v)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropMeta {
    pub src_width: usize,
    pub src_height: usize,
    pub offset_y: usize,
    pub crop_height: usize,
    pub target: usize,
}

impl CropMeta {
    /// Keeps rows `[h/3, h)` of a `w x h` source.
    pub fn bottom_two_thirds(src_width: usize, src_height: usize, target: usize) -> Result<Self> {
        if src_width == 0 || src_height < 3 || target == 0 {
            return Err(Error::ImageTooSmall {
                width: src_width,
                height: src_height,
                min: 3,
            });
        }
        let offset_y = src_height / 3;
        Ok(Self {
            src_width,
            src_height,
            offset_y,
            crop_height: src_height - offset_y,
            target,
        })
    }

    /// Metadata for a source that already is the full `target x target` frame.
    pub fn identity(target: usize) -> Self {
        Self {
            src_width: target,
            src_height: target,
            offset_y: 0,
            crop_height: target,
            target,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target == 0 || self.src_width == 0 || self.crop_height == 0 {
            return Err(Error::Config("crop metadata has a zero dimension".into()));
        }
        if self.offset_y + self.crop_height > self.src_height {
            return Err(Error::Config("crop window exceeds the source frame".into()));
        }
        Ok(())
    }

    pub fn scale_x(&self) -> f64 {
        self.src_width as f64 / self.target as f64
    }

    pub fn scale_y(&self) -> f64 {
        self.crop_height as f64 / self.target as f64
    }

    /// Map-space pixel to continuous source-image coordinates.
    pub fn map_to_image(&self, u: f64, v: f64) -> (f64, f64) {
        (u * self.scale_x(), self.offset_y as f64 + v * self.scale_y())
    }

    /// Source-image coordinates to continuous map-space coordinates.
    pub fn image_to_map(&self, x: f64, y: f64) -> (f64, f64) {
        (x / self.scale_x(), (y - self.offset_y as f64) / self.scale_y())
    }
}

/// A frame ready for segmentation.
#[derive(Clone, Debug)]
pub struct PreprocessedFrame {
    /// `target x target x 3` tensor in `[-1, 1]`.
    pub tensor: ImageBuffer<f32>,
    /// The same crop as 8-bit RGB, for segmenters that take raw bytes.
    pub rgb: ByteImage,
    pub crop: CropMeta,
}

#[inline]
pub fn normalize_sample(v: f32) -> f32 {
    v * (2.0 / 255.0) - 1.0
}

/// Crops the bottom two thirds, resizes bilinearly to `target x target` and
/// scales samples linearly from `[0, 255]` to `[-1, 1]`.
pub fn preprocess_frame(rgb: &ByteImage, target: usize) -> Result<PreprocessedFrame> {
    rgb.ensure_channels(3)?;
    let crop = CropMeta::bottom_two_thirds(rgb.width(), rgb.height(), target)?;
    let (w, h) = (rgb.width(), rgb.height());
    let mut tensor = ImageBuffer::<f32>::new(target, target, 3);
    let mut bytes = ByteImage::new(target, target, 3);
    let (sx_scale, sy_scale) = (crop.scale_x(), crop.scale_y());
    // horizontal taps are shared by every row
    let taps: Vec<(usize, usize, f32)> = (0..target).map(|x| bilinear_taps(x as f64 * sx_scale, w)).collect();
    let src = rgb.data();
    let row_len = target * 3;
    let rows = tensor
        .data_mut()
        .chunks_exact_mut(row_len)
        .zip(bytes.data_mut().chunks_exact_mut(row_len));
    for (y, (t_row, b_row)) in rows.enumerate() {
        let (y0, y1, fy) = bilinear_taps(crop.offset_y as f64 + y as f64 * sy_scale, h);
        let (r0, r1) = (&src[y0 * w * 3..(y0 + 1) * w * 3], &src[y1 * w * 3..(y1 + 1) * w * 3]);
        let pixels = t_row.chunks_exact_mut(3).zip(b_row.chunks_exact_mut(3)).zip(&taps);
        for ((t_px, b_px), &(x0, x1, fx)) in pixels {
            let (a0, a1, c0, c1) = (
                &r0[x0 * 3..x0 * 3 + 3],
                &r0[x1 * 3..x1 * 3 + 3],
                &r1[x0 * 3..x0 * 3 + 3],
                &r1[x1 * 3..x1 * 3 + 3],
            );
            for c in 0..3 {
                let top = lerp(f32::from(a0[c]), f32::from(a1[c]), fx);
                let bottom = lerp(f32::from(c0[c]), f32::from(c1[c]), fx);
                let v = lerp(top, bottom, fy);
                t_px[c] = normalize_sample(v);
                // v is in [0, 255]; +0.5 then truncation rounds half up
                b_px[c] = (v + 0.5) as u8;
            }
        }
    }
    Ok(PreprocessedFrame {
        tensor,
        rgb: bytes,
        crop,
    })
}

#[inline]
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    a + (b - a) * t
}

#[inline]
fn bilinear_taps(pos: f64, len: usize) -> (usize, usize, f32) {
    let pos = pos.clamp(0.0, (len - 1) as f64);
    let i0 = pos.floor() as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, (pos - i0 as f64) as f32)
}
