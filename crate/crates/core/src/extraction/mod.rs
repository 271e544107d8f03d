//! Sparse border points from a freespace map.
//!
//! Three strategies are offered: vertical scan lines, polar rays fanning out
//! from the bottom centre, and sampled contour loops. Line-based methods
//! report, per line, the last free pixel before the first obstacle seen from
//! the robot; a line starting on an obstacle reports its first pixel as a
//! minimal-range point.

mod contour;

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use contour::{extract_contours, Contour};

use crate::error::{Error, Result};
use crate::freespace::FreespaceMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Vertical,
    Polar,
    Contour,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Vertical, Method::Polar, Method::Contour];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Vertical => "vertical",
            Method::Polar => "polar",
            Method::Contour => "contour",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vertical" => Ok(Method::Vertical),
            "polar" => Ok(Method::Polar),
            "contour" => Ok(Method::Contour),
            other => Err(Error::Config(format!("unknown extraction method `{other}`"))),
        }
    }
}

/// Why a point was emitted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PointKind {
    /// Last free pixel before an obstacle.
    Border,
    /// The line starts on an obstacle; range is effectively zero.
    MinimalRange,
    /// The line never met an obstacle (only with `max_range_markers`).
    MaxRange,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BorderPoint {
    pub u: usize,
    pub v: usize,
    pub method: Method,
    pub ray_index: Option<u32>,
    pub kind: PointKind,
}

pub type BorderPointSet = Vec<BorderPoint>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub method: Method,
    /// Number of scan lines or rays.
    pub count: usize,
    /// Keep every n-th contour point.
    pub contour_stride: usize,
    /// Emit the far end of lines that never hit an obstacle.
    pub max_range_markers: bool,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            method: Method::Polar,
            count: 64,
            contour_stride: 4,
            max_range_markers: false,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("line count must be at least 1".into()));
        }
        if self.contour_stride == 0 {
            return Err(Error::Config("contour stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// A free cell with at least one in-image 4-neighbour that is an obstacle.
pub fn border_predicate(map: &FreespaceMap, u: usize, v: usize) -> Result<bool> {
    if u >= map.width() || v >= map.height() {
        return Err(Error::Index {
            u: u as i64,
            v: v as i64,
            width: map.width(),
            height: map.height(),
        });
    }
    Ok(is_border(map, u, v))
}

#[inline]
fn is_border(map: &FreespaceMap, u: usize, v: usize) -> bool {
    if !map.is_free(u, v) {
        return false;
    }
    let (u, v) = (u as i64, v as i64);
    [(u - 1, v), (u + 1, v), (u, v - 1), (u, v + 1)]
        .into_iter()
        .any(|(x, y)| map.in_bounds(x, y) && !map.is_free(x as usize, y as usize))
}

pub fn extract(map: &FreespaceMap, config: &ExtractionConfig) -> Result<BorderPointSet> {
    config.validate()?;
    match config.method {
        Method::Vertical => vertical_projection_with(map, config.count, config.max_range_markers),
        Method::Polar => polar_projection_with(map, config.count, config.max_range_markers),
        Method::Contour => contour_border_points(map, config.contour_stride),
    }
}

/// Tracks the free run along a line of pixels ordered away from the robot.
struct RunScan {
    last_free: Option<(usize, usize)>,
    hit: Option<(usize, usize, PointKind)>,
}

impl RunScan {
    fn new() -> Self {
        Self {
            last_free: None,
            hit: None,
        }
    }

    /// Returns `false` once the transition has been found.
    fn visit(&mut self, map: &FreespaceMap, u: usize, v: usize) -> bool {
        if map.is_free(u, v) {
            self.last_free = Some((u, v));
            true
        } else {
            self.hit = Some(match self.last_free {
                Some((fu, fv)) => (fu, fv, PointKind::Border),
                None => (u, v, PointKind::MinimalRange),
            });
            false
        }
    }

    fn finish(self, max_range_markers: bool) -> Option<(usize, usize, PointKind)> {
        self.hit.or_else(|| {
            if max_range_markers {
                self.last_free.map(|(u, v)| (u, v, PointKind::MaxRange))
            } else {
                None
            }
        })
    }
}

/// Scans column `u` from the bottom row upward.
pub fn scan_column(map: &FreespaceMap, u: usize, max_range_markers: bool) -> Option<(usize, usize, PointKind)> {
    let mut scan = RunScan::new();
    for v in (0..map.height()).rev() {
        if !scan.visit(map, u, v) {
            break;
        }
    }
    scan.finish(max_range_markers)
}

/// Column of scan line `i` out of `k` over a `width`-wide map.
pub fn vertical_column(i: usize, k: usize, width: usize) -> usize {
    (((i as f64 + 0.5) * width as f64 / k as f64).floor() as usize).min(width - 1)
}

pub fn vertical_projection(map: &FreespaceMap, k: usize) -> Result<BorderPointSet> {
    vertical_projection_with(map, k, false)
}

pub fn vertical_projection_with(map: &FreespaceMap, k: usize, max_range_markers: bool) -> Result<BorderPointSet> {
    if k == 0 || k > map.width() {
        return Err(Error::Config(format!(
            "vertical line count {k} outside 1..={}",
            map.width()
        )));
    }
    if map.height() == 0 {
        return Ok(Vec::new());
    }
    Ok((0..k)
        .filter_map(|i| {
            let u = vertical_column(i, k, map.width());
            scan_column(map, u, max_range_markers).map(|(u, v, kind)| BorderPoint {
                u,
                v,
                method: Method::Vertical,
                ray_index: Some(i as u32),
                kind,
            })
        })
        .collect())
}

/// Angle of polar ray `j` out of `k`, measured from the robot's right.
pub fn polar_angle(j: usize, k: usize) -> f64 {
    std::f64::consts::PI * (j as f64 + 0.5) / k as f64
}

/// Visits the pixels along a polar ray from the bottom centre outward.
///
/// The ray is marched in half-pixel steps; whenever two consecutive samples
/// are only diagonally adjacent, the 4-connected cell the ray crosses in
/// between is visited too. Stops when the ray leaves the image or `visit`
/// returns `false`.
pub fn walk_polar_ray(width: usize, height: usize, theta: f64, mut visit: impl FnMut(usize, usize) -> bool) {
    if width == 0 || height == 0 {
        return;
    }
    let cx = width as f64 / 2.0;
    let (cos, sin) = (theta.cos(), theta.sin());
    let in_bounds = |x: i64, y: i64| x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height;
    // (x, y) with y measured upward from the bottom row
    let mut prev: Option<(i64, i64)> = None;
    let mut t = 0.0f64;
    loop {
        let x = (cx - t * cos).floor() as i64;
        let y = (t * sin).floor() as i64;
        if !in_bounds(x, y) {
            return;
        }
        match prev {
            Some(p) if p == (x, y) => {}
            Some((px, py)) => {
                if px != x && py != y {
                    let bx = px.max(x) as f64;
                    let by = py.max(y) as f64;
                    let tx = if cos != 0.0 { (cx - bx) / cos } else { f64::INFINITY };
                    let ty = if sin != 0.0 { by / sin } else { f64::INFINITY };
                    let mid = if tx < ty { (x, py) } else { (px, y) };
                    if in_bounds(mid.0, mid.1) && !visit(mid.0 as usize, height - 1 - mid.1 as usize) {
                        return;
                    }
                }
                if !visit(x as usize, height - 1 - y as usize) {
                    return;
                }
            }
            None => {
                if !visit(x as usize, height - 1 - y as usize) {
                    return;
                }
            }
        }
        prev = Some((x, y));
        t += 0.5;
    }
}

pub fn polar_projection(map: &FreespaceMap, k: usize) -> Result<BorderPointSet> {
    polar_projection_with(map, k, false)
}

pub fn polar_projection_with(map: &FreespaceMap, k: usize, max_range_markers: bool) -> Result<BorderPointSet> {
    if k == 0 {
        return Err(Error::Config("polar ray count must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let mut scan = RunScan::new();
        walk_polar_ray(map.width(), map.height(), polar_angle(j, k), |u, v| {
            scan.visit(map, u, v)
        });
        if let Some((u, v, kind)) = scan.finish(max_range_markers) {
            out.push(BorderPoint {
                u,
                v,
                method: Method::Polar,
                ray_index: Some(j as u32),
                kind,
            });
        }
    }
    Ok(out)
}

/// Every `stride`-th point of every contour, minus points on the image
/// boundary (field-of-view limits rather than obstacles). Duplicates are
/// dropped.
pub fn contour_border_points(map: &FreespaceMap, stride: usize) -> Result<BorderPointSet> {
    if stride == 0 {
        return Err(Error::Config("contour stride must be at least 1".into()));
    }
    let (w, h) = (map.width(), map.height());
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for contour in extract_contours(map) {
        for &(u, v) in contour.points.iter().step_by(stride) {
            if u == 0 || v == 0 || u + 1 == w || v + 1 == h {
                continue;
            }
            if seen.insert((u, v)) {
                debug_assert!(is_border(map, u, v));
                out.push(BorderPoint {
                    u,
                    v,
                    method: Method::Contour,
                    ray_index: None,
                    kind: PointKind::Border,
                });
            }
        }
    }
    Ok(out)
}

/// Writes `u,v,method,ray_index` rows with a header line.
pub fn write_csv<W: Write>(mut out: W, points: &[BorderPoint]) -> Result<()> {
    writeln!(out, "u,v,method,ray_index")?;
    for p in points {
        match p.ray_index {
            Some(i) => writeln!(out, "{},{},{},{}", p.u, p.v, p.method, i)?,
            None => writeln!(out, "{},{},{},", p.u, p.v, p.method)?,
        }
    }
    Ok(())
}

/// Parses the output of [`write_csv`]. The point kind is not stored, so every
/// row comes back as [`PointKind::Border`].
pub fn read_csv<R: BufRead>(input: R) -> Result<BorderPointSet> {
    let bad = |line: usize, why: &str| Error::Format {
        format: "csv",
        reason: format!("line {line}: {why}"),
    };
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("u,")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [u, v, method, ray] = fields[..] else {
            return Err(bad(i + 1, "expected 4 fields"));
        };
        out.push(BorderPoint {
            u: u.trim().parse().map_err(|_| bad(i + 1, "bad u"))?,
            v: v.trim().parse().map_err(|_| bad(i + 1, "bad v"))?,
            method: method.trim().parse().map_err(|_| bad(i + 1, "bad method"))?,
            ray_index: match ray.trim() {
                "" => None,
                r => Some(r.parse().map_err(|_| bad(i + 1, "bad ray index"))?),
            },
            kind: PointKind::Border,
        });
    }
    Ok(out)
}
