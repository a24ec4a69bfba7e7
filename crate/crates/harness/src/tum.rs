//! TUM trajectory files: `stamp x y z qx qy qz qw` per line, `#` comments.
//! Planar poses are written with `z = 0` and a yaw-only quaternion.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use mrio_core::geometry::yaw_of;
use mrio_core::pipeline::PoseRecord;
use mrio_core::wrap_angle;
use mrio_sim::TruthSample;
use nalgebra::{Quaternion, UnitQuaternion};

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct TumPose {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl From<&PoseRecord> for TumPose {
    fn from(p: &PoseRecord) -> Self {
        Self {
            t: p.stamp.secs(),
            x: p.x,
            y: p.y,
            yaw: p.theta,
        }
    }
}

impl From<&TruthSample> for TumPose {
    fn from(s: &TruthSample) -> Self {
        Self {
            t: s.t,
            x: s.x,
            y: s.y,
            yaw: wrap_angle(s.theta),
        }
    }
}

pub fn write_tum<W: Write>(poses: &[TumPose], mut w: W) -> io::Result<()> {
    writeln!(w, "# timestamp x y z qx qy qz qw")?;
    for p in poses {
        let (s, c) = (p.yaw / 2.0).sin_cos();
        writeln!(w, "{} {} {} 0 0 0 {} {}", p.t, p.x, p.y, s, c)?;
    }
    w.flush()
}

pub fn save_tum(poses: &[TumPose], path: &Path) -> io::Result<()> {
    let mut buf = Vec::new();
    write_tum(poses, &mut buf)?;
    fs::write(path, buf)
}

/// Parses a TUM file; `z` and any roll/pitch are dropped.
pub fn read_tum(text: &str) -> Result<Vec<TumPose>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| format!("line {}: {e}", i + 1))?;
        if vals.len() != 8 {
            return Err(format!("line {}: expected 8 fields, found {}", i + 1, vals.len()));
        }
        if !vals.iter().all(|v| v.is_finite()) {
            return Err(format!("line {}: non-finite value", i + 1));
        }
        let q = Quaternion::new(vals[7], vals[4], vals[5], vals[6]);
        if q.norm() == 0.0 {
            return Err(format!("line {}: zero quaternion", i + 1));
        }
        out.push(TumPose {
            t: vals[0],
            x: vals[1],
            y: vals[2],
            yaw: yaw_of(&UnitQuaternion::from_quaternion(q)),
        });
    }
    Ok(out)
}

pub fn load_tum(path: &Path) -> Result<Vec<TumPose>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    read_tum(&text).map_err(|e| format!("{}: {e}", path.display()))
}
