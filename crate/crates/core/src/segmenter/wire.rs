//! FSEG framing: a 13-byte header followed by `payload_len` bytes.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "FSEG"
//! 4       1     kind (0 = RGB request, 1 = mask response)
//! 5       4     payload_len, u32 little-endian
//! 9       4     frame_index, u32 little-endian
//! ```

use std::io::{ErrorKind, Read, Write};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"FSEG";
pub const HEADER_LEN: usize = 13;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum FrameKind {
    Request = 0,
    Response = 1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SegFrameHeader {
    pub kind: FrameKind,
    pub payload_len: u32,
    pub frame_index: u32,
}

impl SegFrameHeader {
    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[..4].copy_from_slice(&MAGIC);
        out[4] = self.kind as u8;
        out[5..9].copy_from_slice(&self.payload_len.to_le_bytes());
        out[9..13].copy_from_slice(&self.frame_index.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8; HEADER_LEN]) -> Result<Self> {
        if bytes[..4] != MAGIC {
            return Err(Error::Protocol(format!("bad magic {:02x?}", &bytes[..4])));
        }
        let kind = match bytes[4] {
            0 => FrameKind::Request,
            1 => FrameKind::Response,
            k => return Err(Error::Protocol(format!("unknown frame kind {k}"))),
        };
        Ok(Self {
            kind,
            payload_len: u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")),
            frame_index: u32::from_le_bytes(bytes[9..13].try_into().expect("4 bytes")),
        })
    }
}

/// Writes one header + payload frame.
pub fn write_frame<W: Write>(out: &mut W, kind: FrameKind, frame_index: u32, payload: &[u8]) -> Result<()> {
    let payload_len = u32::try_from(payload.len()).map_err(|_| Error::Protocol("payload exceeds u32 length".into()))?;
    let header = SegFrameHeader {
        kind,
        payload_len,
        frame_index,
    };
    out.write_all(&header.encode())?;
    out.write_all(payload)?;
    out.flush()?;
    Ok(())
}

/// Reads one frame. Returns `Ok(None)` on a clean end of stream before the
/// header; a stream that ends mid-frame is a protocol error.
pub fn read_frame<R: Read>(input: &mut R, max_payload: usize) -> Result<Option<(SegFrameHeader, Vec<u8>)>> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match input.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(Error::Protocol("stream ended inside a header".into())),
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let header = SegFrameHeader::decode(&header)?;
    let len = header.payload_len as usize;
    if len > max_payload {
        return Err(Error::Protocol(format!(
            "payload of {len} bytes exceeds the {max_payload}-byte limit"
        )));
    }
    let mut payload = vec![0u8; len];
    input.read_exact(&mut payload).map_err(|e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            Error::Protocol(format!("payload truncated (expected {len} bytes)"))
        } else {
            e.into()
        }
    })?;
    Ok(Some((header, payload)))
}
