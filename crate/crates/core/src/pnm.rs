//! Binary netpbm IO: P5 (gray) and P6 (RGB), 8-bit in and 8/16-bit out.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ByteImage;

fn format_err(reason: impl Into<String>) -> Error {
    Error::Format {
        format: "PNM",
        reason: reason.into(),
    }
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(format_err("missing magic number"));
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return Err(format_err("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(format_err("expected a decimal header field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format_err("header field out of range"))?;
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(format_err("missing whitespace after maxval")),
    }
    let [width, height, maxval] = fields;
    Ok(Header {
        magic,
        width,
        height,
        maxval,
        data_start: pos,
    })
}

/// Decodes a binary P5 or P6 image with maxval ≤ 255.
///
/// Samples are rescaled to 0..=255 when maxval is below 255.
pub fn decode(bytes: &[u8]) -> Result<ByteImage> {
    let header = parse_header(bytes)?;
    let channels = match &header.magic {
        b"P5" => 1,
        b"P6" => 3,
        other => {
            return Err(format_err(format!(
                "unsupported magic {}",
                String::from_utf8_lossy(other)
            )))
        }
    };
    if header.maxval == 0 || header.maxval > 255 {
        return Err(format_err(format!("unsupported maxval {}", header.maxval)));
    }
    if header.width == 0 || header.height == 0 {
        return Err(format_err("zero image dimension"));
    }
    let len = header
        .width
        .checked_mul(header.height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| format_err("image dimensions overflow"))?;
    let raster = bytes
        .get(header.data_start..header.data_start + len)
        .ok_or_else(|| format_err("truncated raster"))?;
    let mut data = raster.to_vec();
    if header.maxval != 255 {
        let maxval = header.maxval as u32;
        for v in &mut data {
            *v = ((u32::from(*v).min(maxval) * 255 + maxval / 2) / maxval) as u8;
        }
    }
    ByteImage::from_vec(header.width, header.height, channels, data)
}

pub fn read(path: impl AsRef<Path>) -> Result<ByteImage> {
    let path = path.as_ref();
    decode(&fs::read(path).map_err(|e| crate::error::io_at(path, e))?)
}

/// Encodes a gray image as P5 or an RGB image as P6.
pub fn encode(img: &ByteImage) -> Vec<u8> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

pub fn write(path: impl AsRef<Path>, img: &ByteImage) -> Result<()> {
    fs::write(path, encode(img))?;
    Ok(())
}

/// Encodes 16-bit gray samples as P5 with maxval 65535 (big-endian samples).
pub fn encode_gray16(width: usize, height: usize, samples: &[u16]) -> Result<Vec<u8>> {
    if samples.len() != width * height {
        return Err(Error::Shape(format!(
            "{} samples for a {width}x{height} image",
            samples.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.reserve(samples.len() * 2);
    for s in samples {
        out.write_all(&s.to_be_bytes())?;
    }
    Ok(out)
}
