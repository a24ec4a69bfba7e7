//! JSON-lines sensor logs.
//!
//! One record per line, tagged by `type`:
//!
//! ```text
//! {"type":"imu","t":0.005,"ax":0.3,"ay":0.0,"az":9.80665,"gx":0.0,"gy":0.0,"gz":0.0,"qw":1.0,"qx":0.0,"qy":0.0,"qz":0.0}
//! {"type":"radar","t":0.1,"radar_id":1,"targets":[{"x":2.1,"y":-0.4,"z":0.3,"vd":-0.97}]}
//! ```
//!
//! Each stream must be time-ordered on its own; the two are merged on load
//! with IMU records first on equal stamps.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use mrio_core::pipeline::{Event, ImuSample};
use mrio_core::{RadarScan, RadarTarget, Timestamp, Vec3};
use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest tolerated deviation of an orientation quaternion from unit norm.
pub const QUATERNION_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: timestamp goes backwards within its stream")]
    NonMonotonicTime { line: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Record {
    Imu {
        t: f64,
        ax: f64,
        ay: f64,
        az: f64,
        gx: f64,
        gy: f64,
        gz: f64,
        qw: f64,
        qx: f64,
        qy: f64,
        qz: f64,
    },
    Radar {
        t: f64,
        radar_id: u32,
        targets: Vec<TargetRecord>,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetRecord {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub vd: f64,
}

impl Record {
    pub fn t(&self) -> f64 {
        match self {
            Record::Imu { t, .. } | Record::Radar { t, .. } => *t,
        }
    }

    pub fn from_event(e: &Event) -> Self {
        match e {
            Event::Imu(s) => {
                let q = s.orientation.quaternion();
                Record::Imu {
                    t: s.stamp.secs(),
                    ax: s.accel.x,
                    ay: s.accel.y,
                    az: s.accel.z,
                    gx: s.gyro.x,
                    gy: s.gyro.y,
                    gz: s.gyro.z,
                    qw: q.w,
                    qx: q.i,
                    qy: q.j,
                    qz: q.k,
                }
            }
            Event::Radar(s) => Record::Radar {
                t: s.stamp.secs(),
                radar_id: s.radar_id,
                targets: s
                    .targets
                    .iter()
                    .map(|t| TargetRecord {
                        x: t.position.x,
                        y: t.position.y,
                        z: t.position.z,
                        vd: t.doppler,
                    })
                    .collect(),
            },
        }
    }

    pub fn into_event(self) -> Result<Event, String> {
        let stamp = |t: f64| Timestamp::new(t).map_err(|e| e.to_string());
        match self {
            Record::Imu {
                t,
                ax,
                ay,
                az,
                gx,
                gy,
                gz,
                qw,
                qx,
                qy,
                qz,
            } => {
                let vals = [ax, ay, az, gx, gy, gz, qw, qx, qy, qz];
                if !vals.iter().all(|v| v.is_finite()) {
                    return Err("non-finite IMU value".into());
                }
                let q = Quaternion::new(qw, qx, qy, qz);
                let norm = q.norm();
                if (norm - 1.0).abs() > QUATERNION_NORM_TOL {
                    return Err(format!("quaternion norm {norm} is not 1"));
                }
                Ok(Event::Imu(ImuSample {
                    stamp: stamp(t)?,
                    accel: Vec3::new(ax, ay, az),
                    gyro: Vec3::new(gx, gy, gz),
                    orientation: UnitQuaternion::new_unchecked(q),
                }))
            }
            Record::Radar { t, radar_id, targets } => {
                let targets = targets
                    .into_iter()
                    .map(|r| RadarTarget::new(Vec3::new(r.x, r.y, r.z), r.vd, f64::INFINITY))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| e.to_string())?;
                Ok(Event::Radar(RadarScan {
                    stamp: stamp(t)?,
                    radar_id,
                    targets,
                }))
            }
        }
    }
}

/// Reads a log and returns its events in processing order.
pub fn read_dataset<R: BufRead>(reader: R) -> Result<Vec<Event>, DatasetError> {
    let mut imu: Vec<Event> = Vec::new();
    let mut radar: Vec<Event> = Vec::new();
    let (mut last_imu, mut last_radar) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| DatasetError::Parse {
            line: line_no,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            line: line_no,
            reason: e.to_string(),
        })?;
        let (last, stream) = match rec {
            Record::Imu { .. } => (&mut last_imu, &mut imu),
            Record::Radar { .. } => (&mut last_radar, &mut radar),
        };
        let t = rec.t();
        if t < *last {
            return Err(DatasetError::NonMonotonicTime { line: line_no });
        }
        *last = t;
        let event = rec.into_event().map_err(|reason| DatasetError::Parse { line: line_no, reason })?;
        stream.push(event);
    }
    Ok(merge_streams(imu, radar))
}

/// Two-way merge of time-ordered streams; IMU wins ties.
pub fn merge_streams(imu: Vec<Event>, radar: Vec<Event>) -> Vec<Event> {
    let mut out = Vec::with_capacity(imu.len() + radar.len());
    let mut r = radar.into_iter().peekable();
    for e in imu {
        while let Some(scan) = r.next_if(|s| s.stamp() < e.stamp()) {
            out.push(scan);
        }
        out.push(e);
    }
    out.extend(r);
    out
}

pub fn load_dataset(path: &Path) -> Result<Vec<Event>, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_dataset(BufReader::new(file))
}

pub fn write_dataset<W: Write>(events: &[Event], mut w: W) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, &Record::from_event(e))?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn save_dataset(events: &[Event], path: &Path) -> io::Result<()> {
    write_dataset(events, BufWriter::new(File::create(path)?))
}
