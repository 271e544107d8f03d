//! ASCII PLY output for weighted pointclouds.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::projection::{Point3D, PointCloud3D};

pub fn write_ply<W: Write>(mut out: W, cloud: &PointCloud3D) -> Result<()> {
    writeln!(out, "ply")?;
    writeln!(out, "format ascii 1.0")?;
    writeln!(out, "comment frame_id {}", cloud.frame_id)?;
    if let Some(beta) = &cloud.beta {
        writeln!(out, "comment beta {}", beta.beta)?;
    }
    writeln!(out, "element vertex {}", cloud.points.len())?;
    for name in ["x", "y", "z", "intensity"] {
        writeln!(out, "property float {name}")?;
    }
    writeln!(out, "end_header")?;
    for p in &cloud.points {
        writeln!(out, "{} {} {} {}", p.x as f32, p.y as f32, p.z as f32, p.intensity)?;
    }
    Ok(())
}

fn ply_err(reason: impl Into<String>) -> Error {
    Error::Format {
        format: "PLY",
        reason: reason.into(),
    }
}

/// Reads back the vertices written by [`write_ply`].
pub fn read_ply<R: BufRead>(input: R) -> Result<Vec<Point3D>> {
    let mut lines = input.lines();
    if lines.next().transpose()?.as_deref() != Some("ply") {
        return Err(ply_err("missing `ply` magic"));
    }
    let mut count = None;
    let mut properties = Vec::new();
    for line in lines.by_ref() {
        let line = line?;
        let mut words = line.split_whitespace();
        match words.next() {
            Some("format") if words.next() != Some("ascii") => return Err(ply_err("only ascii PLY is supported")),
            Some("element") => {
                if words.next() == Some("vertex") {
                    count = words.next().and_then(|n| n.parse::<usize>().ok());
                }
            }
            Some("property") => properties.push(words.last().unwrap_or_default().to_string()),
            Some("end_header") => break,
            _ => {}
        }
    }
    let count = count.ok_or_else(|| ply_err("missing vertex element"))?;
    let column = |name: &str| {
        properties
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| ply_err(format!("missing property {name}")))
    };
    let cols = [column("x")?, column("y")?, column("z")?, column("intensity")?];
    let mut points = Vec::with_capacity(count);
    for line in lines.take(count) {
        let values: Vec<f64> = line?
            .split_whitespace()
            .map(|w| w.parse::<f64>().map_err(|_| ply_err(format!("bad number `{w}`"))))
            .collect::<Result<_>>()?;
        let get = |i: usize| values.get(i).copied().ok_or_else(|| ply_err("short vertex row"));
        points.push(Point3D {
            x: get(cols[0])?,
            y: get(cols[1])?,
            z: get(cols[2])?,
            intensity: get(cols[3])? as f32,
        });
    }
    if points.len() != count {
        return Err(ply_err("fewer vertices than declared"));
    }
    Ok(points)
}
