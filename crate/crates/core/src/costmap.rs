//! 2D occupancy costmap fed by weighted ground pointclouds.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ByteImage;
use crate::pnm;
use crate::projection::PointCloud3D;

pub const LETHAL: u8 = 255;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostmapParams {
    /// Cost added to an obstacle cell by a point of intensity 1.
    pub mark_step: f64,
    /// Cost removed from each cell a ray passes through, at intensity 1.
    pub clear_step: f64,
    /// Cells at or above this cost block traversal.
    pub lethal_threshold: u8,
}

impl Default for CostmapParams {
    fn default() -> Self {
        Self {
            mark_step: 128.0,
            clear_step: 32.0,
            lethal_threshold: 128,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotPose {
    pub x: f64,
    pub y: f64,
    /// Radians in `(-π, π]`.
    pub heading: f64,
}

impl RobotPose {
    pub const ORIGIN: RobotPose = RobotPose {
        x: 0.0,
        y: 0.0,
        heading: 0.0,
    };

    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: wrap_angle(heading),
        }
    }

    /// Base-frame point to world frame.
    pub fn transform(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.heading.sin_cos();
        (self.x + c * x - s * y, self.y + s * x + c * y)
    }
}

fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Metadata written next to the exported PGM.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostmapMeta {
    pub resolution: f64,
    pub origin_x: f64,
    pub origin_y: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Costmap {
    resolution: f64,
    width: usize,
    height: usize,
    origin_x: f64,
    origin_y: f64,
    cells: Vec<u8>,
    params: CostmapParams,
}

impl Costmap {
    pub fn new(resolution: f64, width: usize, height: usize, origin_x: f64, origin_y: f64) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::Config(format!("resolution must be positive, got {resolution}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::Config("costmap must have at least one cell".into()));
        }
        Ok(Self {
            resolution,
            width,
            height,
            origin_x,
            origin_y,
            cells: vec![0; width * height],
            params: CostmapParams::default(),
        })
    }

    /// Square map of side `size_m` metres centred on the world origin.
    pub fn centered(resolution: f64, size_m: f64) -> Result<Self> {
        let n = (size_m / resolution).ceil().max(1.0) as usize;
        let half = n as f64 * resolution / 2.0;
        Self::new(resolution, n, n, -half, -half)
    }

    pub fn with_params(mut self, params: CostmapParams) -> Self {
        self.params = params;
        self
    }

    pub fn params(&self) -> &CostmapParams {
        &self.params
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn origin(&self) -> (f64, f64) {
        (self.origin_x, self.origin_y)
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn meta(&self) -> CostmapMeta {
        CostmapMeta {
            resolution: self.resolution,
            origin_x: self.origin_x,
            origin_y: self.origin_y,
            width: self.width,
            height: self.height,
        }
    }

    pub fn cost(&self, col: usize, row: usize) -> u8 {
        self.cells[row * self.width + col]
    }

    pub fn set_cost(&mut self, col: usize, row: usize, cost: u8) {
        self.cells[row * self.width + col] = cost;
    }

    /// Continuous cell coordinates of a world point.
    fn to_grid(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.origin_x) / self.resolution,
            (y - self.origin_y) / self.resolution,
        )
    }

    pub fn world_to_cell(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let (gx, gy) = self.to_grid(x, y);
        let (col, row) = (gx.floor(), gy.floor());
        if col >= 0.0 && row >= 0.0 && (col as usize) < self.width && (row as usize) < self.height {
            Some((col as usize, row as usize))
        } else {
            None
        }
    }

    /// World coordinates of a cell centre.
    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.origin_x + (col as f64 + 0.5) * self.resolution,
            self.origin_y + (row as f64 + 0.5) * self.resolution,
        )
    }

    /// Marks each cloud point and clears the cells between the robot and it.
    ///
    /// Points are in the robot base frame and are placed in the world with
    /// `pose`. Out-of-grid points are skipped.
    pub fn integrate_pointcloud(&mut self, cloud: &PointCloud3D, pose: &RobotPose) {
        let (rx, ry) = self.to_grid(pose.x, pose.y);
        let robot_cell = self.world_to_cell(pose.x, pose.y);
        for p in &cloud.points {
            let intensity = f64::from(p.intensity).clamp(0.0, 1.0);
            let mark = (intensity * self.params.mark_step).round().clamp(0.0, 255.0) as u8;
            let clear = (intensity * self.params.clear_step).round().clamp(0.0, 255.0) as u8;
            if mark == 0 && clear == 0 {
                continue;
            }
            let (wx, wy) = pose.transform(p.x, p.y);
            let Some(target) = self.world_to_cell(wx, wy) else {
                continue;
            };
            if clear > 0 {
                let (tx, ty) = self.to_grid(wx, wy);
                for (c, r) in supercover_cells(rx, ry, tx, ty) {
                    if c < 0 || r < 0 || c as usize >= self.width || r as usize >= self.height {
                        continue;
                    }
                    let cell = (c as usize, r as usize);
                    if cell == target || Some(cell) == robot_cell {
                        continue;
                    }
                    let i = cell.1 * self.width + cell.0;
                    self.cells[i] = self.cells[i].saturating_sub(clear);
                }
            }
            let i = target.1 * self.width + target.0;
            self.cells[i] = self.cells[i].saturating_add(mark);
        }
    }

    /// Every cell whose centre lies within `robot_radius` of `(x, y)`, plus the
    /// cell containing it, must be in the grid and below the lethal threshold.
    pub fn is_traversable(&self, x: f64, y: f64, robot_radius: f64) -> bool {
        let Some(centre) = self.world_to_cell(x, y) else {
            return false;
        };
        if self.cost(centre.0, centre.1) >= self.params.lethal_threshold {
            return false;
        }
        let r = robot_radius.max(0.0);
        let (gx0, gy0) = self.to_grid(x - r, y - r);
        let (gx1, gy1) = self.to_grid(x + r, y + r);
        for row in gy0.floor() as i64..=gy1.floor() as i64 {
            for col in gx0.floor() as i64..=gx1.floor() as i64 {
                let cx = self.origin_x + (col as f64 + 0.5) * self.resolution;
                let cy = self.origin_y + (row as f64 + 0.5) * self.resolution;
                if (cx - x).hypot(cy - y) > r {
                    continue;
                }
                if col < 0 || row < 0 || col as usize >= self.width || row as usize >= self.height {
                    return false;
                }
                if self.cost(col as usize, row as usize) >= self.params.lethal_threshold {
                    return false;
                }
            }
        }
        true
    }

    pub fn lethal_count(&self) -> usize {
        let t = self.params.lethal_threshold;
        self.cells.iter().filter(|&&c| c >= t).count()
    }

    /// Gray image with +y up: image row 0 is the grid's top row.
    pub fn to_image(&self) -> ByteImage {
        let mut data = Vec::with_capacity(self.cells.len());
        for row in (0..self.height).rev() {
            data.extend_from_slice(&self.cells[row * self.width..(row + 1) * self.width]);
        }
        ByteImage::from_vec(self.width, self.height, 1, data).expect("consistent dimensions")
    }

    /// Writes `<stem>.pgm` and `<stem>.json`.
    pub fn export(&self, pgm_path: impl AsRef<Path>) -> Result<()> {
        let pgm_path = pgm_path.as_ref();
        pnm::write(pgm_path, &self.to_image())?;
        let json = serde_json::to_string_pretty(&self.meta())?;
        std::fs::write(pgm_path.with_extension("json"), json)?;
        Ok(())
    }
}

/// Cells touched by the segment between two points given in continuous cell
/// coordinates, in order from start to end (Amanatides–Woo traversal).
///
/// When the segment passes exactly through a lattice corner, the x step is
/// taken first.
pub fn supercover_cells(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<(i64, i64)> {
    let (mut cx, mut cy) = (x0.floor() as i64, y0.floor() as i64);
    let (ex, ey) = (x1.floor() as i64, y1.floor() as i64);
    let (dx, dy) = (x1 - x0, y1 - y0);
    let step_x: i64 = if dx > 0.0 { 1 } else { -1 };
    let step_y: i64 = if dy > 0.0 { 1 } else { -1 };
    let t_delta_x = if dx != 0.0 { (1.0 / dx).abs() } else { f64::INFINITY };
    let t_delta_y = if dy != 0.0 { (1.0 / dy).abs() } else { f64::INFINITY };
    let mut t_max_x = if dx > 0.0 {
        ((cx + 1) as f64 - x0) / dx
    } else if dx < 0.0 {
        (cx as f64 - x0) / dx
    } else {
        f64::INFINITY
    };
    let mut t_max_y = if dy > 0.0 {
        ((cy + 1) as f64 - y0) / dy
    } else if dy < 0.0 {
        (cy as f64 - y0) / dy
    } else {
        f64::INFINITY
    };
    let max_steps = ((ex - cx).abs() + (ey - cy).abs()) as usize;
    let mut out = Vec::with_capacity(max_steps + 1);
    out.push((cx, cy));
    for _ in 0..max_steps {
        if t_max_x <= t_max_y {
            cx += step_x;
            t_max_x += t_delta_x;
        } else {
            cy += step_y;
            t_max_y += t_delta_y;
        }
        out.push((cx, cy));
    }
    out
}
