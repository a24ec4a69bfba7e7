//! Radar front end: sensing-radius gating, extrinsic transformation into the
//! body frame, and merging of per-radar scans into one body-frame cloud.
//!
//! Doppler convention used everywhere in this crate: a positive Doppler value
//! means the target is receding. For a static target seen along the body-frame
//! unit line of sight `u` from a platform moving with velocity `v`, the
//! expected Doppler is `-uᵀv`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose, Timestamp, Vec3};

/// One radar return in the emitting sensor's frame.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct RadarTarget {
    pub position: Vec3,
    /// Radial speed in m/s, positive when range is increasing.
    pub doppler: f64,
}

impl RadarTarget {
    /// Validates a raw return. Zero-range and non-finite returns are rejected,
    /// as are Doppler magnitudes above `max_doppler`.
    pub fn new(position: Vec3, doppler: f64, max_doppler: f64) -> Result<Self> {
        if !position.iter().all(|c| c.is_finite()) || !doppler.is_finite() {
            return Err(Error::InvalidMeasurement("non-finite radar target".into()));
        }
        if position.norm() <= 0.0 {
            return Err(Error::InvalidMeasurement("zero-range radar target".into()));
        }
        if doppler.abs() > max_doppler {
            return Err(Error::InvalidMeasurement(format!(
                "doppler {doppler} exceeds bound {max_doppler}"
            )));
        }
        Ok(Self { position, doppler })
    }

    pub fn range(&self) -> f64 {
        self.position.norm()
    }
}

/// A timestamped batch of returns from one radar.
#[derive(Clone, Debug, PartialEq)]
pub struct RadarScan {
    pub stamp: Timestamp,
    pub radar_id: u32,
    pub targets: Vec<RadarTarget>,
}

/// Mounting transform `ᴮT_R` of one radar.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Extrinsics {
    pub radar_id: u32,
    pub mount: Pose,
}

/// Sensing-radius gate `[r_inner, r_outer]`, closed on both ends.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateConfig {
    pub r_inner: f64,
    pub r_outer: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            r_inner: 0.5,
            r_outer: 8.0,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r_inner >= 0.0 && self.r_inner < self.r_outer && self.r_outer.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "gate requires 0 <= r_inner < r_outer, got [{}, {}]",
                self.r_inner, self.r_outer
            )))
        }
    }

    pub fn contains(&self, range: f64) -> bool {
        self.r_inner <= range && range <= self.r_outer
    }
}

/// Keeps the targets whose range from the sensor lies inside the gate.
pub fn range_gate(scan: &RadarScan, cfg: &GateConfig) -> RadarScan {
    RadarScan {
        stamp: scan.stamp,
        radar_id: scan.radar_id,
        targets: scan
            .targets
            .iter()
            .filter(|t| cfg.contains(t.range()))
            .copied()
            .collect(),
    }
}

/// A target expressed in the body frame.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct BodyTarget {
    pub position: Vec3,
    pub doppler: f64,
    /// Unit line of sight from the sensor, rotated into the body frame.
    pub los: Vec3,
    pub radar_id: u32,
}

/// Maps a scan into the body frame through its radar's mount.
pub fn to_body(scan: &RadarScan, ext: &Extrinsics) -> Result<Vec<BodyTarget>> {
    if scan.radar_id != ext.radar_id {
        return Err(Error::MismatchedRadarId {
            scan: scan.radar_id,
            extrinsics: ext.radar_id,
        });
    }
    scan.targets
        .iter()
        .map(|t| {
            let range = t.range();
            if range <= 0.0 {
                return Err(Error::InvalidMeasurement("zero-range radar target".into()));
            }
            let los = ext.mount.rotate_vector(&(t.position / range));
            Ok(BodyTarget {
                position: ext.mount.transform_point(&t.position),
                doppler: t.doppler,
                los: los.normalize(),
                radar_id: scan.radar_id,
            })
        })
        .collect()
}

/// Union of all body-frame targets observed in one radar epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct MergedScan {
    pub stamp: Timestamp,
    pub targets: Vec<BodyTarget>,
}

impl MergedScan {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Concatenates body-frame scans in the given order, tagging the result with
/// the latest contributing stamp. Returns `None` for an empty input list.
pub fn merge_scans(scans: &[(Timestamp, Vec<BodyTarget>)]) -> Option<MergedScan> {
    let stamp = scans
        .iter()
        .map(|(s, _)| *s)
        .reduce(|a, b| if b > a { b } else { a })?;
    let targets = scans.iter().flat_map(|(_, t)| t.iter().copied()).collect();
    Some(MergedScan { stamp, targets })
}

/// Serializable mount description: translation in meters and
/// roll/pitch/yaw in degrees (rotation `R_z(yaw)·R_y(pitch)·R_x(roll)`).
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MountConfig {
    pub id: u32,
    pub translation: [f64; 3],
    pub rpy_deg: [f64; 3],
}

impl MountConfig {
    pub fn to_extrinsics(&self) -> Extrinsics {
        let [r, p, y] = self.rpy_deg.map(f64::to_radians);
        Extrinsics {
            radar_id: self.id,
            mount: Pose::from_euler(r, p, y, Vec3::from(self.translation)),
        }
    }
}

/// Six-radar ring: four planar units facing forward, left, backward and right,
/// plus two pitched 45° up over the front and rear.
pub fn default_mounts() -> Vec<MountConfig> {
    let m = |id, translation, rpy_deg| MountConfig {
        id,
        translation,
        rpy_deg,
    };
    vec![
        m(1, [0.25, 0.0, 0.30], [0.0, 0.0, 0.0]),
        m(2, [0.0, 0.20, 0.30], [0.0, 0.0, 90.0]),
        m(3, [-0.25, 0.0, 0.30], [0.0, 0.0, 180.0]),
        m(4, [0.0, -0.20, 0.30], [0.0, 0.0, -90.0]),
        m(5, [0.20, 0.0, 0.45], [0.0, -45.0, 0.0]),
        m(6, [-0.20, 0.0, 0.45], [0.0, -45.0, 180.0]),
    ]
}

/// Registered mounts of every radar on the platform.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Rig {
    radars: Vec<Extrinsics>,
}

impl Rig {
    pub fn new(radars: Vec<Extrinsics>) -> Result<Self> {
        let mut ids: Vec<u32> = radars.iter().map(|e| e.radar_id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateRadar(w[0]));
        }
        Ok(Self { radars })
    }

    pub fn get(&self, radar_id: u32) -> Result<&Extrinsics> {
        self.radars
            .iter()
            .find(|e| e.radar_id == radar_id)
            .ok_or(Error::UnknownRadar(radar_id))
    }

    pub fn radars(&self) -> &[Extrinsics] {
        &self.radars
    }

    pub fn len(&self) -> usize {
        self.radars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radars.is_empty()
    }

    pub fn from_mounts(mounts: &[MountConfig]) -> Result<Self> {
        Self::new(mounts.iter().map(MountConfig::to_extrinsics).collect())
    }
}
