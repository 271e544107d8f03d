//! Producers of 224x224 freespace maps.

mod exec;
pub mod wire;

use std::collections::VecDeque;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use exec::{ExecBackend, DEFAULT_TIMEOUT_MS};

use crate::error::{Error, Result};
use crate::freespace::FreespaceMap;
use crate::image::ByteImage;
use crate::imaging::{self, NETWORK_INPUT, SOBEL_X, SOBEL_Y};

/// Side of every map a backend returns.
pub const MAP_SIDE: usize = NETWORK_INPUT;

pub const DEFAULT_FLOOD_THRESHOLD: f32 = 30.0;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub name: String,
    pub input_width: usize,
    pub input_height: usize,
    pub input_channels: usize,
}

impl Capabilities {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            input_width: MAP_SIDE,
            input_height: MAP_SIDE,
            input_channels: 3,
        }
    }
}

pub trait SegmenterBackend {
    fn capabilities(&self) -> Capabilities;

    /// Segments the preprocessed 224x224 RGB frame `rgb`.
    fn segment(&mut self, frame_index: u32, rgb: &ByteImage) -> Result<FreespaceMap>;
}

fn check_input(rgb: &ByteImage) -> Result<()> {
    rgb.ensure_channels(3)?;
    if rgb.width() != MAP_SIDE || rgb.height() != MAP_SIDE {
        return Err(Error::Shape(format!(
            "segmenter input must be {MAP_SIDE}x{MAP_SIDE}, got {}x{}",
            rgb.width(),
            rgb.height()
        )));
    }
    Ok(())
}

/// Masks stored as `<dir>/<frame_index>.pgm`.
#[derive(Clone, Debug)]
pub struct FileBackend {
    dir: PathBuf,
}

impl FileBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn mask_path(&self, frame_index: u32) -> PathBuf {
        self.dir.join(format!("{frame_index}.pgm"))
    }

    pub fn load(&self, frame_index: u32) -> Result<FreespaceMap> {
        let path = self.mask_path(frame_index);
        let map = FreespaceMap::read_pgm(&path).map_err(|e| Error::Backend(format!("{}: {e}", path.display())))?;
        if map.width() != MAP_SIDE || map.height() != MAP_SIDE {
            return Err(Error::Backend(format!(
                "{}: mask is {}x{}, expected {MAP_SIDE}x{MAP_SIDE}",
                path.display(),
                map.width(),
                map.height()
            )));
        }
        Ok(map)
    }
}

impl SegmenterBackend for FileBackend {
    fn capabilities(&self) -> Capabilities {
        Capabilities::new(format!("file:{}", self.dir.display()))
    }

    fn segment(&mut self, frame_index: u32, _rgb: &ByteImage) -> Result<FreespaceMap> {
        self.load(frame_index)
    }
}

/// Flood fill from the bottom centre over pixels with a weak Sobel response.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FloodBackend {
    pub threshold: f32,
}

impl Default for FloodBackend {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_FLOOD_THRESHOLD,
        }
    }
}

impl FloodBackend {
    pub fn new(threshold: f32) -> Self {
        Self { threshold }
    }

    pub fn run(&self, rgb: &ByteImage) -> Result<FreespaceMap> {
        check_input(rgb)?;
        let gray = imaging::to_grayscale(rgb)?.to_plane()?;
        let sx = imaging::convolve3x3(&gray, &SOBEL_X)?;
        let sy = imaging::convolve3x3(&gray, &SOBEL_Y)?;
        let (w, h) = (gray.width(), gray.height());
        let passable: Vec<bool> = sx
            .data()
            .iter()
            .zip(sy.data())
            .map(|(a, b)| a.hypot(*b) < self.threshold)
            .collect();
        let mut map = FreespaceMap::all_obstacle(w, h);
        let seed = (w / 2, h - 1);
        if !passable[seed.1 * w + seed.0] {
            return Ok(map);
        }
        let mut queue = VecDeque::from([seed]);
        map.set(seed.0, seed.1, true);
        while let Some((u, v)) = queue.pop_front() {
            let mut push = |nu: usize, nv: usize| {
                if passable[nv * w + nu] && !map.is_free(nu, nv) {
                    map.set(nu, nv, true);
                    queue.push_back((nu, nv));
                }
            };
            if u > 0 {
                push(u - 1, v);
            }
            if u + 1 < w {
                push(u + 1, v);
            }
            if v > 0 {
                push(u, v - 1);
            }
            if v + 1 < h {
                push(u, v + 1);
            }
        }
        Ok(map)
    }
}

impl SegmenterBackend for FloodBackend {
    fn capabilities(&self) -> Capabilities {
        Capabilities::new(format!("flood:{}", self.threshold))
    }

    fn segment(&mut self, _frame_index: u32, rgb: &ByteImage) -> Result<FreespaceMap> {
        self.run(rgb)
    }
}

/// Parsed `--segmenter` value: `file:<dir>`, `flood[:threshold]` or
/// `exec:<command>`.
#[derive(Clone, Debug, PartialEq)]
pub enum SegmenterSpec {
    File(PathBuf),
    Flood(f32),
    Exec(String),
}

impl SegmenterSpec {
    pub fn build(&self) -> Result<Box<dyn SegmenterBackend + Send>> {
        Ok(match self {
            SegmenterSpec::File(dir) => Box::new(FileBackend::new(dir)),
            SegmenterSpec::Flood(t) => Box::new(FloodBackend::new(*t)),
            SegmenterSpec::Exec(cmd) => Box::new(ExecBackend::spawn(cmd)?),
        })
    }

    pub fn file(dir: impl AsRef<Path>) -> Self {
        SegmenterSpec::File(dir.as_ref().to_path_buf())
    }
}

impl FromStr for SegmenterSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        match (kind, arg) {
            ("file", Some(dir)) if !dir.is_empty() => Ok(SegmenterSpec::File(dir.into())),
            ("flood", None) => Ok(SegmenterSpec::Flood(DEFAULT_FLOOD_THRESHOLD)),
            ("flood", Some(t)) => t
                .parse::<f32>()
                .ok()
                .filter(|t| t.is_finite() && *t >= 0.0)
                .map(SegmenterSpec::Flood)
                .ok_or_else(|| Error::Config(format!("bad flood threshold `{t}`"))),
            ("exec", Some(cmd)) if !cmd.trim().is_empty() => Ok(SegmenterSpec::Exec(cmd.into())),
            _ => Err(Error::Config(format!(
                "bad segmenter `{s}` (expected file:<dir>, flood[:threshold] or exec:<command>)"
            ))),
        }
    }
}

impl fmt::Display for SegmenterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SegmenterSpec::File(dir) => write!(f, "file:{}", dir.display()),
            SegmenterSpec::Flood(t) => write!(f, "flood:{t}"),
            SegmenterSpec::Exec(cmd) => write!(f, "exec:{cmd}"),
        }
    }
}
