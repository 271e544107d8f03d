//! Scripted FSEG segmenter used by tests.
//!
//! `fseg-echo <mode>` where mode is one of `free`, `obstacle`, `masks:<dir>`
//! (replies with `<dir>/<index>.pgm`), `bad-magic`, `truncate`,
//! `wrong-index`, `exit`, `sleep:<ms>`, `short`.

use std::io::{self, BufReader, BufWriter, Write};
use std::time::Duration;

use fsnav_core::segmenter::wire::{read_frame, write_frame, FrameKind, SegFrameHeader};
use fsnav_core::segmenter::MAP_SIDE;
use fsnav_core::FreespaceMap;

fn main() {
    let mode = std::env::args().nth(1).unwrap_or_else(|| "free".into());
    let mut input = BufReader::new(io::stdin().lock());
    let mut out = BufWriter::new(io::stdout().lock());
    let n = MAP_SIDE * MAP_SIDE;
    while let Ok(Some((header, _payload))) = read_frame(&mut input, 3 * n) {
        let index = header.frame_index;
        let mask = match mode.as_str() {
            "obstacle" => vec![0u8; n],
            "short" => vec![255u8; n / 2],
            "exit" => return,
            "truncate" => {
                let bytes = SegFrameHeader {
                    kind: FrameKind::Response,
                    payload_len: n as u32,
                    frame_index: index,
                }
                .encode();
                let _ = out.write_all(&bytes);
                let _ = out.write_all(&vec![255u8; n / 3]);
                let _ = out.flush();
                return;
            }
            "bad-magic" => {
                let mut bytes = SegFrameHeader {
                    kind: FrameKind::Response,
                    payload_len: n as u32,
                    frame_index: index,
                }
                .encode();
                bytes[..4].copy_from_slice(b"NOPE");
                let _ = out.write_all(&bytes);
                let _ = out.write_all(&vec![255u8; n]);
                let _ = out.flush();
                continue;
            }
            m if m.starts_with("sleep:") => {
                let ms = m[6..].parse().unwrap_or(5000);
                std::thread::sleep(Duration::from_millis(ms));
                vec![255u8; n]
            }
            m if m.starts_with("masks:") => {
                let path = std::path::Path::new(&m[6..]).join(format!("{index}.pgm"));
                match FreespaceMap::read_pgm(&path) {
                    Ok(map) => map.cells().iter().map(|&c| c * 255).collect(),
                    Err(e) => {
                        eprintln!("fseg-echo: {}: {e}", path.display());
                        return;
                    }
                }
            }
            _ => vec![255u8; n],
        };
        let reply_index = if mode == "wrong-index" {
            index.wrapping_add(1)
        } else {
            index
        };
        if write_frame(&mut out, FrameKind::Response, reply_index, &mask).is_err() || out.flush().is_err() {
            return;
        }
    }
}
