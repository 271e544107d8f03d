//! Ground-plane pinhole backprojection of border points.
//!
//! Frames:
//! - camera: X right, Y down, Z forward (optical axis);
//! - level: the camera frame before `rotation` is applied, i.e. a camera at
//!   the same position looking horizontally forward. The ground is the plane
//!   `Y = camera_height` in this frame;
//! - base: x forward, y left, z up, origin on the ground below the camera.
//!
//! `rotation` maps level-frame vectors into the camera frame.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::{BorderPoint, PointKind};
use crate::imaging::{BlurFactor, CropMeta};

/// Downward ray component below which a ray counts as parallel to the ground.
pub const HORIZON_EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Level-to-camera rotation, row-major.
    pub rotation: [f64; 9],
    #[serde(rename = "camera_height_m")]
    pub camera_height: f64,
    #[serde(default)]
    pub k1: f64,
    #[serde(default)]
    pub k2: f64,
}

type Vec3 = [f64; 3];

fn normalize(v: Vec3) -> Vec3 {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

pub const IDENTITY_ROTATION: [f64; 9] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];

/// Rotation about the camera X axis that pitches the optical axis down by
/// `pitch` radians.
pub fn pitch_down(pitch: f64) -> [f64; 9] {
    let (s, c) = pitch.sin_cos();
    [1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c]
}

impl CameraModel {
    /// Undistorted camera with a level optical axis.
    pub fn level(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize, camera_height: f64) -> Self {
        Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            rotation: IDENTITY_ROTATION,
            camera_height,
            k1: 0.0,
            k2: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy, self.camera_height, self.k1, self.k2]
            .iter()
            .chain(self.rotation.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Camera("non-finite parameter".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::Camera("focal lengths must be positive".into()));
        }
        if self.camera_height <= 0.0 {
            return Err(Error::Camera("camera height must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Camera("image size must be non-zero".into()));
        }
        let r = &self.rotation;
        for i in 0..3 {
            for j in 0..3 {
                // (RᵀR)ij = Σk R[k][i] R[k][j]
                let dot: f64 = (0..3).map(|k| r[3 * k + i] * r[3 * k + j]).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                if (dot - expected).abs() > 1e-6 {
                    return Err(Error::Camera("rotation is not orthonormal".into()));
                }
            }
        }
        let det = r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6])
            + r[2] * (r[3] * r[7] - r[4] * r[6]);
        if (det - 1.0).abs() > 1e-6 {
            return Err(Error::Camera("rotation determinant is not 1".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cam: CameraModel = serde_json::from_str(text)?;
        cam.validate()?;
        Ok(cam)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| crate::error::io_at(path, e))?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("camera serializes")
    }

    fn rotate(&self, v: Vec3) -> Vec3 {
        let r = &self.rotation;
        [
            r[0] * v[0] + r[1] * v[1] + r[2] * v[2],
            r[3] * v[0] + r[4] * v[1] + r[5] * v[2],
            r[6] * v[0] + r[7] * v[1] + r[8] * v[2],
        ]
    }

    fn rotate_transposed(&self, v: Vec3) -> Vec3 {
        let r = &self.rotation;
        [
            r[0] * v[0] + r[3] * v[1] + r[6] * v[2],
            r[1] * v[0] + r[4] * v[1] + r[7] * v[2],
            r[2] * v[0] + r[5] * v[1] + r[8] * v[2],
        ]
    }

    /// Applies the radial model `x_d = x (1 + k1 r² + k2 r⁴)`.
    pub fn distort_point(&self, u: f64, v: f64) -> (f64, f64) {
        let x = (u - self.cx) / self.fx;
        let y = (v - self.cy) / self.fy;
        let r2 = x * x + y * y;
        let g = 1.0 + self.k1 * r2 + self.k2 * r2 * r2;
        (self.cx + self.fx * x * g, self.cy + self.fy * y * g)
    }

    /// Inverts [`distort_point`](Self::distort_point) with five fixed-point
    /// iterations in normalized coordinates.
    pub fn undistort_point(&self, u: f64, v: f64) -> Result<(f64, f64)> {
        if self.k1 == 0.0 && self.k2 == 0.0 {
            return Ok((u, v));
        }
        let xd = (u - self.cx) / self.fx;
        let yd = (v - self.cy) / self.fy;
        let (mut x, mut y) = (xd, yd);
        for _ in 0..5 {
            let r2 = x * x + y * y;
            let g = 1.0 + self.k1 * r2 + self.k2 * r2 * r2;
            if g.abs() < 1e-12 || !g.is_finite() {
                return Err(Error::Distortion { u, v });
            }
            let (nx, ny) = (xd / g, yd / g);
            if (nx - x).abs() > 1.0 || (ny - y).abs() > 1.0 {
                return Err(Error::Distortion { u, v });
            }
            x = nx;
            y = ny;
        }
        Ok((self.cx + self.fx * x, self.cy + self.fy * y))
    }

    /// Unit direction of the ray through pixel `(u, v)`, in the level frame.
    pub fn pixel_ray(&self, u: f64, v: f64) -> [f64; 3] {
        let d_cam = normalize([(u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0]);
        self.rotate_transposed(d_cam)
    }

    /// Intersects the pixel ray with the ground plane; the result is in the
    /// base frame with `z = 0`.
    pub fn backproject_ground(&self, u: f64, v: f64) -> Result<Point3D> {
        let d = self.pixel_ray(u, v);
        if d[1] <= HORIZON_EPS {
            return Err(Error::AboveHorizon);
        }
        let t = self.camera_height / d[1];
        Ok(Point3D {
            x: t * d[2],
            y: -t * d[0],
            z: 0.0,
            intensity: 0.0,
        })
    }

    /// Projects a base-frame point to undistorted pixel coordinates. `None`
    /// when the point is behind the camera.
    pub fn project(&self, x: f64, y: f64, z: f64) -> Option<(f64, f64)> {
        let level = [-y, self.camera_height - z, x];
        let c = self.rotate(level);
        if c[2] <= 0.0 {
            return None;
        }
        Some((self.fx * c[0] / c[2] + self.cx, self.fy * c[1] / c[2] + self.cy))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point3D {
    /// Metres forward.
    pub x: f64,
    /// Metres left.
    pub y: f64,
    /// Metres up.
    pub z: f64,
    /// Blur weight in `[0, 1]`.
    pub intensity: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointCloud3D {
    pub points: Vec<Point3D>,
    pub frame_id: String,
    pub beta: Option<BlurFactor>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    /// β at which a frame gets weight 0.5.
    pub beta0: f64,
    /// Points farther than this (metres, horizontal) are dropped.
    pub max_range: f64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            beta0: 1.0,
            max_range: 10.0,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta0 > 0.0 && self.beta0.is_finite()) {
            return Err(Error::Config(format!("beta0 must be positive, got {}", self.beta0)));
        }
        if self.max_range.is_nan() || self.max_range <= 0.0 {
            return Err(Error::Config(format!(
                "max range must be positive, got {}",
                self.max_range
            )));
        }
        Ok(())
    }
}

/// `β / (β + β0)`: 0 for a featureless frame, approaching 1 as it sharpens.
pub fn blur_weight(beta: f64, beta0: f64) -> f32 {
    if beta <= 0.0 {
        0.0
    } else {
        (beta / (beta + beta0)) as f32
    }
}

/// Map-space border point to continuous source-image pixel coordinates.
pub fn map_to_image_coords(p: &BorderPoint, crop: &CropMeta) -> Result<(f64, f64)> {
    crop.validate()?;
    if p.u >= crop.target || p.v >= crop.target {
        return Err(Error::Index {
            u: p.u as i64,
            v: p.v as i64,
            width: crop.target,
            height: crop.target,
        });
    }
    Ok(crop.map_to_image(p.u as f64, p.v as f64))
}

/// Border points to ground points weighted by the frame's blur factor.
///
/// Rays at or above the horizon and points beyond `max_range` are dropped,
/// as are max-range markers (they mark the absence of an obstacle).
pub fn build_pointcloud(
    points: &[BorderPoint],
    cam: &CameraModel,
    crop: &CropMeta,
    beta: &BlurFactor,
    config: &ProjectionConfig,
    frame_id: &str,
) -> Result<PointCloud3D> {
    config.validate()?;
    crop.validate()?;
    let intensity = blur_weight(beta.beta, config.beta0);
    let mut out = Vec::with_capacity(points.len());
    for p in points {
        if p.kind == PointKind::MaxRange {
            continue;
        }
        let (u, v) = map_to_image_coords(p, crop)?;
        let (u, v) = match cam.undistort_point(u, v) {
            Ok(uv) => uv,
            Err(Error::Distortion { .. }) => continue,
            Err(e) => return Err(e),
        };
        match cam.backproject_ground(u, v) {
            Ok(mut q) => {
                if q.x.hypot(q.y) > config.max_range || !q.x.is_finite() || !q.y.is_finite() {
                    continue;
                }
                q.intensity = intensity;
                out.push(q);
            }
            Err(Error::AboveHorizon) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(PointCloud3D {
        points: out,
        frame_id: frame_id.to_string(),
        beta: Some(*beta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::Method;
    use proptest::prelude::*;

    fn cam() -> CameraModel {
        CameraModel::level(100.0, 100.0, 112.0, 112.0, 224, 224, 0.5)
    }

    fn bp(u: usize, v: usize) -> BorderPoint {
        BorderPoint {
            u,
            v,
            method: Method::Polar,
            ray_index: Some(0),
            kind: PointKind::Border,
        }
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn map_coords_examples() {
        let crop = CropMeta::bottom_two_thirds(224, 336, 224).unwrap();
        assert_eq!(map_to_image_coords(&bp(0, 0), &crop).unwrap(), (0.0, 112.0));

        let id = CropMeta::identity(224);
        assert_eq!(map_to_image_coords(&bp(17, 200), &id).unwrap(), (17.0, 200.0));

        let crop = CropMeta::bottom_two_thirds(448, 672, 224).unwrap();
        assert_eq!(map_to_image_coords(&bp(223, 223), &crop).unwrap(), (446.0, 670.0));

        let broken = CropMeta { target: 0, ..id };
        assert!(matches!(map_to_image_coords(&bp(0, 0), &broken), Err(Error::Config(_))));
    }

    #[test]
    fn undistort_examples() {
        let c = cam();
        assert_eq!(c.undistort_point(40.0, 70.0).unwrap(), (40.0, 70.0));

        let d = CameraModel {
            k1: -0.3,
            k2: 0.05,
            ..cam()
        };
        assert_eq!(d.undistort_point(112.0, 112.0).unwrap(), (112.0, 112.0));

        // five iterations converge to 1e-3 px out to roughly r = 0.85
        let d = CameraModel { k1: -0.1, ..cam() };
        for (u, v) in [
            (150.0, 140.0),
            (60.0, 160.0),
            (180.0, 60.0),
            (170.0, 170.0),
            (50.0, 112.0),
        ] {
            let (du, dv) = d.distort_point(u, v);
            let (ru, rv) = d.undistort_point(du, dv).unwrap();
            assert!(close(ru, u, 1e-3) && close(rv, v, 1e-3), "{u},{v} -> {ru},{rv}");
        }
        let d = CameraModel {
            k1: -0.1,
            ..crate::evaluation::standard_camera()
        };
        for (u, v) in [(0.0, 0.0), (223.0, 0.0), (0.0, 335.0), (223.0, 335.0)] {
            let (du, dv) = d.distort_point(u, v);
            let (ru, rv) = d.undistort_point(du, dv).unwrap();
            assert!(close(ru, u, 1e-3) && close(rv, v, 1e-3), "{u},{v} -> {ru},{rv}");
        }
    }

    #[test]
    fn undistort_divergence() {
        let d = CameraModel { k1: -50.0, ..cam() };
        assert!(matches!(d.undistort_point(224.0, 224.0), Err(Error::Distortion { .. })));
    }

    #[test]
    fn pixel_ray_examples() {
        let c = cam();
        let d = c.pixel_ray(112.0, 112.0);
        assert_eq!(d, [0.0, 0.0, 1.0]);
        let d = c.pixel_ray(212.0, 112.0);
        let s = 1.0 / 2f64.sqrt();
        assert!(close(d[0], s, 1e-12) && close(d[1], 0.0, 1e-12) && close(d[2], s, 1e-12));
    }

    #[test]
    fn pixel_ray_matches_matrix_product() {
        let c = CameraModel {
            rotation: pitch_down(0.3),
            ..cam()
        };
        let (u, v): (f64, f64) = (150.0, 47.0);
        // independent product: Rᵀ d as an explicit 3x3 multiply
        let r = [
            [1.0, 0.0, 0.0],
            [0.0, 0.3f64.cos(), -0.3f64.sin()],
            [0.0, 0.3f64.sin(), 0.3f64.cos()],
        ];
        let raw = [(u - 112.0) / 100.0, (v - 112.0) / 100.0, 1.0];
        let n = (raw[0] * raw[0] + raw[1] * raw[1] + raw[2] * raw[2]).sqrt();
        let mut expected = [0.0; 3];
        for (i, e) in expected.iter_mut().enumerate() {
            for (k, row) in r.iter().enumerate() {
                *e += row[i] * raw[k] / n;
            }
        }
        let got = c.pixel_ray(u, v);
        for i in 0..3 {
            assert!(close(got[i], expected[i], 1e-9));
        }
    }

    #[test]
    fn backprojection_examples() {
        let c = cam();
        let p = c.backproject_ground(112.0, 212.0).unwrap();
        assert!(close(p.x, 0.5, 1e-12) && close(p.y, 0.0, 1e-12));
        assert_eq!(p.z, 0.0);

        assert!(matches!(c.backproject_ground(112.0, 112.0), Err(Error::AboveHorizon)));
        assert!(matches!(c.backproject_ground(112.0, 50.0), Err(Error::AboveHorizon)));

        // lateral offset: X_cam = 0.25 to the right, so y (left) = -0.25
        let p = c.backproject_ground(162.0, 212.0).unwrap();
        assert!(close(p.x, 0.5, 1e-12) && close(p.y, -0.25, 1e-12));
    }

    #[test]
    fn camera_validation() {
        assert!(cam().validate().is_ok());
        assert!(CameraModel { fx: 0.0, ..cam() }.validate().is_err());
        assert!(CameraModel {
            camera_height: -1.0,
            ..cam()
        }
        .validate()
        .is_err());
        let mut bad = cam();
        bad.rotation[0] = -1.0; // reflection: orthonormal but det = -1
        assert!(bad.validate().is_err());
        bad.rotation[0] = 2.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn camera_json_keys() {
        let text = r#"{"fx": 300, "fy": 300, "cx": 112, "cy": 112, "width": 224, "height": 224,
            "rotation": [1,0,0, 0,1,0, 0,0,1], "camera_height_m": 0.5, "k1": 0, "k2": 0}"#;
        let c = CameraModel::from_json(text).unwrap();
        assert_eq!(c.camera_height, 0.5);
        assert_eq!(CameraModel::from_json(&c.to_json()).unwrap(), c);
        assert!(CameraModel::from_json(r#"{"fx": 1}"#).is_err());
    }

    #[test]
    fn pointcloud_examples() {
        let c = cam();
        let crop = CropMeta::identity(224);
        let config = ProjectionConfig::default();
        let sharp = BlurFactor {
            beta: 3.0,
            beta_mean_abs: 1.0,
            pixel_count: 9,
        };
        let cloud = build_pointcloud(&[], &c, &crop, &sharp, &config, "f").unwrap();
        assert!(cloud.points.is_empty());

        let flat = BlurFactor {
            beta: 0.0,
            beta_mean_abs: 0.0,
            pixel_count: 9,
        };
        let pts = [bp(112, 212), bp(150, 200), bp(112, 100)];
        let cloud = build_pointcloud(&pts, &c, &crop, &flat, &config, "f").unwrap();
        // the third point is above the horizon
        assert_eq!(cloud.points.len(), 2);
        assert!(cloud.points.iter().all(|p| p.intensity == 0.0 && p.z == 0.0));

        let cloud = build_pointcloud(&pts, &c, &crop, &sharp, &config, "f").unwrap();
        assert!(cloud.points.iter().all(|p| p.intensity == 0.75));

        // beyond max range: row 113 is 50 m away
        let cloud = build_pointcloud(&[bp(112, 113)], &c, &crop, &sharp, &config, "f").unwrap();
        assert!(cloud.points.is_empty());

        let bad = ProjectionConfig { beta0: 0.0, ..config };
        assert!(matches!(
            build_pointcloud(&pts, &c, &crop, &sharp, &bad, "f"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn depth_decreases_down_the_image() {
        let c = cam();
        let mut last = f64::INFINITY;
        for v in 113..224 {
            let p = c.backproject_ground(112.0, v as f64).unwrap();
            assert!(p.x < last);
            last = p.x;
        }
    }

    proptest! {
        #[test]
        fn backprojection_inverts_projection(
            x in 0.3f64..20.0, y in -5.0f64..5.0, pitch in 0.0f64..0.6, h in 0.1f64..2.0
        ) {
            let c = CameraModel { rotation: pitch_down(pitch), camera_height: h, ..cam() };
            if let Some((u, v)) = c.project(x, y, 0.0) {
                if let Ok(p) = c.backproject_ground(u, v) {
                    prop_assert!(close(p.x, x, 1e-6) && close(p.y, y, 1e-6), "{:?} vs {},{}", p, x, y);
                    prop_assert_eq!(p.z, 0.0);
                }
            }
        }

        #[test]
        fn weight_is_bounded_and_monotone(a in 0.0f64..1e9, b in 0.0f64..1e9, beta0 in 1e-3f64..1e6) {
            let (wa, wb) = (blur_weight(a, beta0), blur_weight(b, beta0));
            prop_assert!((0.0..=1.0).contains(&wa));
            if a < b {
                prop_assert!(wa <= wb);
            }
        }
    }
}
