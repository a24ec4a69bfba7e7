//! Radar-only global map: every merged body-frame scan is pushed through the
//! current body pose and appended to a world-frame cloud, optionally thinned
//! to one point per voxel.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, Timestamp, Vec3};
use crate::radar::MergedScan;

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct MapPoint {
    pub position: Vec3,
    pub stamp: Timestamp,
    pub radar_id: u32,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MappingConfig {
    /// Voxel edge in meters; 0 keeps every point.
    pub voxel_size: f64,
    /// Apply IMU roll/pitch when placing points; heading-only otherwise.
    pub use_attitude: bool,
}

impl Default for MappingConfig {
    fn default() -> Self {
        Self {
            voxel_size: 0.10,
            use_attitude: true,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GlobalMap {
    points: Vec<MapPoint>,
    voxel_size: f64,
    occupied: HashSet<(i64, i64, i64)>,
}

impl GlobalMap {
    pub fn new(voxel_size: f64) -> Self {
        Self {
            points: Vec::new(),
            voxel_size: voxel_size.max(0.0),
            occupied: HashSet::new(),
        }
    }

    pub fn points(&self) -> &[MapPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    /// Cell index, `floor(c / voxel)` per axis.
    pub fn voxel_of(&self, p: &Vec3) -> (i64, i64, i64) {
        let s = self.voxel_size;
        (
            (p.x / s).floor() as i64,
            (p.y / s).floor() as i64,
            (p.z / s).floor() as i64,
        )
    }

    /// Transforms the scan into the world frame and inserts it in scan order.
    /// Returns the number of points added.
    pub fn register(&mut self, pose: &Pose, scan: &MergedScan) -> usize {
        let mut inserted = 0;
        for t in &scan.targets {
            let p = pose.transform_point(&t.position);
            if !p.iter().all(|c| c.is_finite()) {
                continue;
            }
            if self.voxel_size > 0.0 && !self.occupied.insert(self.voxel_of(&p)) {
                continue;
            }
            self.points.push(MapPoint {
                position: p,
                stamp: scan.stamp,
                radar_id: t.radar_id,
            });
            inserted += 1;
        }
        inserted
    }

    /// ASCII PLY with `x y z` float vertices.
    pub fn write_ply<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "ply")?;
        writeln!(w, "format ascii 1.0")?;
        writeln!(w, "element vertex {}", self.points.len())?;
        writeln!(w, "property float x")?;
        writeln!(w, "property float y")?;
        writeln!(w, "property float z")?;
        writeln!(w, "end_header")?;
        for p in &self.points {
            writeln!(w, "{} {} {}", p.position.x, p.position.y, p.position.z)?;
        }
        w.flush()
    }

    pub fn export_ply(&self, path: &Path) -> io::Result<()> {
        self.write_ply(BufWriter::new(File::create(path)?))
    }

    /// `x,y,z` per line, no header.
    pub fn write_xyz_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        for p in &self.points {
            writeln!(w, "{},{},{}", p.position.x, p.position.y, p.position.z)?;
        }
        w.flush()
    }
}

/// Parses the vertices of an ASCII PLY file with `x y z` as its first three
/// vertex properties.
pub fn read_ply(text: &str) -> io::Result<Vec<Vec3>> {
    let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
    let mut lines = text.lines();
    if lines.next() != Some("ply") {
        return Err(bad("missing ply magic"));
    }
    let mut count = None;
    for line in lines.by_ref() {
        let line = line.trim();
        if line == "end_header" {
            break;
        }
        if let Some(rest) = line.strip_prefix("element vertex ") {
            count = Some(rest.trim().parse::<usize>().map_err(|_| bad("bad vertex count"))?);
        }
    }
    let count = count.ok_or_else(|| bad("no vertex element"))?;
    let mut out = Vec::with_capacity(count);
    for line in lines.take(count) {
        let vals: Vec<f64> = line
            .split_whitespace()
            .take(3)
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad("bad vertex"))?;
        if vals.len() != 3 {
            return Err(bad("short vertex"));
        }
        out.push(Vec3::new(vals[0], vals[1], vals[2]));
    }
    if out.len() != count {
        return Err(bad("vertex count mismatch"));
    }
    Ok(out)
}

/// World pose of the body from the planar state. `tilt` carries roll/pitch
/// (heading already removed) and is applied in the body frame after yaw.
pub fn pose_to_transform(x: f64, y: f64, theta: f64, tilt: Option<&UnitQuaternion<f64>>) -> Pose {
    let yaw = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), theta);
    let rotation = match tilt {
        Some(t) => UnitQuaternion::new_normalize((yaw * t).into_inner()),
        None => yaw,
    };
    Pose::new(rotation, Vec3::new(x, y, 0.0))
}
