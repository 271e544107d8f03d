//! Axis-aligned synthetic scenes with closed-form ground truth.
//!
//! World coordinates are the robot base frame (x forward, y left), with the
//! camera above the origin. Walls are infinitely tall extrusions of their
//! footprint and occlude everything behind them; holes are drop-offs that
//! remove ground but hide nothing beyond them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freespace::FreespaceMap;
use crate::image::ByteImage;
use crate::imaging::CropMeta;
use crate::projection::CameraModel;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    /// `[min, max]` metres forward.
    pub x_range: [f64; 2],
    /// `[min, max]` metres left.
    pub y_range: [f64; 2],
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self {
            x_range: [x0.min(x1), x0.max(x1)],
            y_range: [y0.min(y1), y0.max(y1)],
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x_range[0]..=self.x_range[1]).contains(&x) && (self.y_range[0]..=self.y_range[1]).contains(&y)
    }

    fn within(&self, outer: &Rect) -> bool {
        self.x_range[0] >= outer.x_range[0]
            && self.x_range[1] <= outer.x_range[1]
            && self.y_range[0] >= outer.y_range[0]
            && self.y_range[1] <= outer.y_range[1]
    }

    /// Parameter interval `[t_in, t_out]` where `origin + t·dir` is inside.
    fn slab(&self, dir: (f64, f64)) -> Option<(f64, f64)> {
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        for (d, [lo, hi]) in [(dir.0, self.x_range), (dir.1, self.y_range)] {
            if d == 0.0 {
                if 0.0 < lo || 0.0 > hi {
                    return None;
                }
            } else {
                let (a, b) = (lo / d, hi / d);
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
        }
        (t0 <= t1).then_some((t0, t1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    /// Drivable ground; `None` is an unbounded floor.
    #[serde(default)]
    pub ground: Option<Rect>,
    #[serde(default)]
    pub walls: Vec<Rect>,
    #[serde(default)]
    pub holes: Vec<Rect>,
    pub floor_color: [u8; 3],
    pub obstacle_color: [u8; 3],
    pub camera: CameraModel,
}

/// Distance from the robot to the first border along a ground bearing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundBorder {
    /// Radians, counter-clockwise from straight ahead.
    pub bearing: f64,
    /// Metres; infinite when nothing is hit.
    pub distance: f64,
}

#[derive(Clone, Debug)]
pub struct SceneRender {
    /// Frame at the camera's resolution.
    pub rgb: ByteImage,
    /// Per-pixel truth at the camera's resolution.
    pub truth: FreespaceMap,
    /// Analytic border distances for bearings spanning the image width.
    pub borders_3d: Vec<GroundBorder>,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        if self.floor_color == self.obstacle_color {
            return Err(Error::Scene("floor and obstacle colours must differ".into()));
        }
        for r in self.walls.iter().chain(&self.holes) {
            let ok = [r.x_range, r.y_range]
                .iter()
                .all(|[a, b]| a.is_finite() && b.is_finite() && a <= b);
            if !ok {
                return Err(Error::Scene(format!("malformed rectangle {r:?}")));
            }
            if let Some(ground) = &self.ground {
                if !r.within(ground) {
                    return Err(Error::Scene(format!("rectangle {r:?} outside the ground extent")));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SceneSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Distance along `bearing` to the first wall, hole or edge of the ground.
    pub fn border_distance(&self, bearing: f64) -> f64 {
        let dir = (bearing.cos(), bearing.sin());
        let mut best = f64::INFINITY;
        for r in self.walls.iter().chain(&self.holes) {
            if let Some((t_in, t_out)) = r.slab(dir) {
                if t_out >= 0.0 {
                    best = best.min(t_in.max(0.0));
                }
            }
        }
        if let Some(ground) = &self.ground {
            match ground.slab(dir) {
                Some((t_in, t_out)) if t_in <= 0.0 && t_out >= 0.0 => best = best.min(t_out),
                _ => best = 0.0,
            }
        }
        best
    }

    /// Whether the ground point `(x, y)` is visible, drivable floor.
    pub fn is_free_ground(&self, x: f64, y: f64) -> bool {
        if let Some(ground) = &self.ground {
            if !ground.contains(x, y) {
                return false;
            }
        }
        if self.walls.iter().chain(&self.holes).any(|r| r.contains(x, y)) {
            return false;
        }
        // occlusion: walls between the camera and the point hide it
        let dist = x.hypot(y);
        let dir = (x / dist, y / dist);
        !self.walls.iter().any(|w| {
            w.slab(dir)
                .is_some_and(|(t_in, t_out)| t_out >= 0.0 && t_in.max(0.0) <= dist)
        })
    }
}

/// Renders the frame, truth mask and analytic borders of a scene.
pub fn render_scene(spec: &SceneSpec) -> Result<SceneRender> {
    spec.validate()?;
    let cam = &spec.camera;
    let (w, h) = (cam.width, cam.height);
    let mut truth = FreespaceMap::all_obstacle(w, h);
    let mut rgb = ByteImage::new(w, h, 3);
    let mut ground_pixels = 0usize;
    for v in 0..h {
        for u in 0..w {
            let free = cam
                .undistort_point(u as f64, v as f64)
                .ok()
                .and_then(|(uu, vv)| cam.backproject_ground(uu, vv).ok())
                .map(|p| {
                    ground_pixels += 1;
                    spec.is_free_ground(p.x, p.y)
                })
                .unwrap_or(false);
            truth.set(u, v, free);
            let color = if free { spec.floor_color } else { spec.obstacle_color };
            for (c, &value) in color.iter().enumerate() {
                rgb.set(u, v, c, value);
            }
        }
    }
    if ground_pixels == 0 {
        return Err(Error::Scene("camera does not see the ground".into()));
    }
    let borders_3d = (0..w)
        .map(|u| {
            let bearing = -((u as f64 - cam.cx) / cam.fx).atan();
            GroundBorder {
                bearing,
                distance: spec.border_distance(bearing),
            }
        })
        .collect();
    Ok(SceneRender { rgb, truth, borders_3d })
}

/// Nearest-neighbour resampling of a source-resolution mask into map space,
/// sampling the same positions the frame preprocessing samples.
pub fn resample_to_map(truth: &FreespaceMap, crop: &CropMeta) -> FreespaceMap {
    let (w, h) = (truth.width(), truth.height());
    FreespaceMap::from_fn(crop.target, crop.target, |u, v| {
        let (x, y) = crop.map_to_image(u as f64, v as f64);
        let x = (x.round() as usize).min(w - 1);
        let y = (y.round() as usize).min(h - 1);
        truth.is_free(x, y)
    })
}

/// Level 224x336 camera, 0.5 m above the floor, `fx = fy = 300`. Its bottom
/// two thirds are exactly one 224x224 network frame.
pub fn standard_camera() -> CameraModel {
    CameraModel::level(300.0, 300.0, 112.0, 168.0, 224, 336, 0.5)
}

fn luminance(c: [u8; 3]) -> f64 {
    0.299 * f64::from(c[0]) + 0.587 * f64::from(c[1]) + 0.114 * f64::from(c[2])
}

/// Random scenes with walls, drop-offs and well-separated colours, all seen
/// through [`standard_camera`].
///
/// Obstacles start at least 1.2 m ahead, so the bottom-centre pixel of the
/// network frame is always free floor.
pub fn synthetic_corpus(count: usize, seed: u64) -> Vec<SceneSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let ground = Rect::new(-1.0, rng.gen_range(5.0..9.0), -6.0, 6.0);
            let mut walls = Vec::new();
            let mut holes = Vec::new();
            for _ in 0..rng.gen_range(0..4) {
                let x0 = rng.gen_range(1.2..4.5);
                let y0 = rng.gen_range(-2.5..2.0);
                walls.push(Rect::new(
                    x0,
                    (x0 + rng.gen_range(0.1..1.0)).min(ground.x_range[1]),
                    y0,
                    (y0 + rng.gen_range(0.2..1.5)).min(6.0),
                ));
            }
            if rng.gen_bool(0.5) {
                // a drop-off spanning the rest of the room
                let x0 = rng.gen_range(1.2..4.0);
                holes.push(Rect::new(x0, ground.x_range[1], -6.0, 6.0));
            }
            let (floor_color, obstacle_color) = loop {
                let a: [u8; 3] = rng.gen();
                let b: [u8; 3] = rng.gen();
                if (luminance(a) - luminance(b)).abs() >= 40.0 {
                    break (a, b);
                }
            };
            SceneSpec {
                ground: Some(ground),
                walls,
                holes,
                floor_color,
                obstacle_color,
                camera: standard_camera(),
            }
        })
        .collect()
}
