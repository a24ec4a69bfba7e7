//! The multi-rate odometry loop.
//!
//! Every IMU sample advances both filters (holding the previous sample's
//! readings over the interval). Radar scans are buffered until the next IMU
//! sample arrives; the buffered scans form one epoch that is gated, moved into
//! the body frame, merged, and solved for ego-velocity. The forward speed then
//! updates the bias filter, whose velocity is differentiated into the
//! offset-free acceleration, and updates the pose filter together with the IMU
//! heading. Finally the merged scan is registered into the map at the updated
//! pose. A degenerate epoch leaves both filters in prediction-only mode.

use log::{debug, warn};
use nalgebra::{Matrix2, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::ego_velocity::{estimate, EgoVelocity, EgoVelocityConfig};
use crate::error::{Error, Result};
use crate::geometry::{tilt_of, yaw_of, Timestamp, Vec3};
use crate::mapping::{pose_to_transform, GlobalMap, MappingConfig};
use crate::radar::{merge_scans, range_gate, to_body, GateConfig, RadarScan, Rig};
use crate::stage1::{Stage1Config, Stage1Filter, Stage1State, MAX_DT};
use crate::stage2::{self, InnovationRecord, Stage2Config, Stage2Measurement, Stage2State};

/// One inertial sample in the body frame plus the AHRS attitude.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ImuSample {
    pub stamp: Timestamp,
    /// Specific force, m/s².
    pub accel: Vec3,
    /// Angular rate, rad/s.
    pub gyro: Vec3,
    pub orientation: UnitQuaternion<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Event {
    Imu(ImuSample),
    Radar(RadarScan),
}

impl Event {
    pub fn stamp(&self) -> Timestamp {
        match self {
            Event::Imu(s) => s.stamp,
            Event::Radar(s) => s.stamp,
        }
    }
}

/// Which acceleration drives the pose filter's prediction.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionMode {
    /// Offset-free acceleration from the bias filter.
    #[default]
    TwoStage,
    /// Raw forward accelerometer reading; the bias filter is bypassed.
    NoStage1,
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub gate: GateConfig,
    pub ego: EgoVelocityConfig,
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    pub mapping: MappingConfig,
    pub mode: FusionMode,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.gate.validate()?;
        self.stage1.validate()?;
        self.stage2.validate()?;
        if self.ego.min_targets < 3 || !(self.ego.max_condition >= 1.0) {
            return Err(Error::InvalidConfig(
                "ego velocity needs min_targets >= 3 and max_condition >= 1".into(),
            ));
        }
        if !(self.ego.variance_floor > 0.0) {
            return Err(Error::InvalidConfig("variance_floor must be positive".into()));
        }
        if !(self.mapping.voxel_size >= 0.0) {
            return Err(Error::InvalidConfig("voxel_size must be >= 0".into()));
        }
        Ok(())
    }
}

/// Estimated planar pose at one instant.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct PoseRecord {
    pub stamp: Timestamp,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EpochStatus {
    Used,
    InsufficientTargets,
    DegenerateGeometry,
    SingularInnovation,
}

/// Per-epoch ego-velocity and filter bookkeeping.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub stamp: Timestamp,
    pub n_raw: usize,
    pub n_gated: usize,
    pub status: EpochStatus,
    pub ego: Option<EgoVelocity>,
}

/// Stage-I state after a radar update, with the acceleration it produced.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Stage1TraceRow {
    pub stamp: Timestamp,
    pub state: Stage1State,
    pub a_cc: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Diagnostics {
    pub imu_samples: usize,
    pub radar_scans: usize,
    pub epochs: Vec<EpochRecord>,
    pub innovations: Vec<InnovationRecord>,
    pub zero_velocity_updates: usize,
    /// IMU gaps longer than the prediction limit that were bridged in steps.
    pub imu_gaps: usize,
}

impl Diagnostics {
    pub fn epochs_with(&self, status: EpochStatus) -> usize {
        self.epochs.iter().filter(|e| e.status == status).count()
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub trajectory: Vec<PoseRecord>,
    pub map: GlobalMap,
    pub stage1_trace: Vec<Stage1TraceRow>,
    pub diagnostics: Diagnostics,
}

struct Filters {
    stage1: Stage1Filter,
    stage2: Stage2State,
    time: Timestamp,
    held: ImuSample,
}

/// Incremental driver; feed events in time order, then call [`finish`].
///
/// [`finish`]: Pipeline::finish
pub struct Pipeline {
    cfg: PipelineConfig,
    rig: Rig,
    filters: Option<Filters>,
    a_cc: f64,
    pending: Vec<RadarScan>,
    last_radar_fix: Option<Timestamp>,
    last_zupt: Option<Timestamp>,
    start: Option<Timestamp>,
    last_stamp: Option<Timestamp>,
    out: PipelineOutput,
}

impl Pipeline {
    pub fn new(rig: Rig, cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            out: PipelineOutput {
                trajectory: Vec::new(),
                map: GlobalMap::new(cfg.mapping.voxel_size),
                stage1_trace: Vec::new(),
                diagnostics: Diagnostics::default(),
            },
            cfg,
            rig,
            filters: None,
            a_cc: 0.0,
            pending: Vec::new(),
            last_radar_fix: None,
            last_zupt: None,
            start: None,
            last_stamp: None,
        })
    }

    pub fn push(&mut self, event: Event) -> Result<()> {
        let stamp = event.stamp();
        if let Some(prev) = self.last_stamp {
            if stamp.secs() < prev.secs() {
                return Err(Error::NonMonotonicTime {
                    dt: stamp.secs() - prev.secs(),
                });
            }
        }
        self.last_stamp = Some(stamp);
        match event {
            Event::Imu(sample) => self.on_imu(sample),
            Event::Radar(scan) => {
                self.rig.get(scan.radar_id)?;
                self.out.diagnostics.radar_scans += 1;
                self.pending.push(scan);
                Ok(())
            }
        }
    }

    pub fn finish(mut self) -> Result<PipelineOutput> {
        self.flush_radar()?;
        self.record_pose();
        Ok(self.out)
    }

    fn on_imu(&mut self, sample: ImuSample) -> Result<()> {
        self.out.diagnostics.imu_samples += 1;
        if self.filters.is_none() {
            let theta0 = yaw_of(&sample.orientation);
            let mut stage1 = Stage1Filter::new(self.cfg.stage1);
            stage1.start(sample.stamp);
            self.filters = Some(Filters {
                stage1,
                stage2: self.cfg.stage2.initial_state(theta0),
                time: sample.stamp,
                held: sample,
            });
            self.start = Some(sample.stamp);
            // scans that arrived before the first IMU sample have no state
            self.pending.clear();
            return Ok(());
        }
        self.flush_radar()?;
        self.record_pose();
        self.propagate_to(sample.stamp)?;
        if let Some(f) = self.filters.as_mut() {
            f.held = sample;
        }
        self.maybe_zero_velocity(sample.stamp)
    }

    fn drive_accel(&self, held: &ImuSample) -> f64 {
        match self.cfg.mode {
            FusionMode::TwoStage => self.a_cc,
            FusionMode::NoStage1 => held.accel.x,
        }
    }

    /// Predicts both filters to `t`, splitting intervals longer than the
    /// prediction limit.
    fn propagate_to(&mut self, t: Timestamp) -> Result<()> {
        let Some(f) = self.filters.as_ref() else {
            return Ok(());
        };
        let total = t.secs() - f.time.secs();
        if total <= 0.0 {
            return Ok(());
        }
        let a_drive = self.drive_accel(&f.held);
        let steps = (total / MAX_DT).ceil().max(1.0) as usize;
        if steps > 1 {
            warn!("bridging {total:.3} s IMU gap at {t} in {steps} steps");
            self.out.diagnostics.imu_gaps += 1;
        }
        let mode = self.cfg.mode;
        let cfg2 = self.cfg.stage2;
        let f = self.filters.as_mut().expect("checked above");
        let t0 = f.time.secs();
        for i in 1..=steps {
            let ti = if i == steps {
                t
            } else {
                Timestamp::new(t0 + total * i as f64 / steps as f64)?
            };
            let dt = ti.secs() - f.time.secs();
            if dt <= 0.0 {
                continue;
            }
            if mode == FusionMode::TwoStage {
                f.stage1.predict_to(ti, f.held.accel.x)?;
            }
            f.stage2 = stage2::predict(&f.stage2, a_drive, f.held.gyro.z, dt, &cfg2.process_noise(dt))?;
            f.time = ti;
        }
        Ok(())
    }

    fn record_pose(&mut self) {
        if let Some(f) = &self.filters {
            let s = &f.stage2;
            if self.out.trajectory.last().map(|p| p.stamp) == Some(f.time) {
                self.out.trajectory.pop();
            }
            self.out.trajectory.push(PoseRecord {
                stamp: f.time,
                x: s.x,
                y: s.y,
                theta: s.theta,
                v: s.v,
            });
        }
    }

    fn flush_radar(&mut self) -> Result<()> {
        if self.pending.is_empty() || self.filters.is_none() {
            return Ok(());
        }
        let scans = std::mem::take(&mut self.pending);
        let n_raw = scans.iter().map(|s| s.targets.len()).sum();
        let mut body = Vec::with_capacity(scans.len());
        for scan in &scans {
            let ext = self.rig.get(scan.radar_id)?;
            let gated = range_gate(scan, &self.cfg.gate);
            body.push((scan.stamp, to_body(&gated, ext)?));
        }
        let merged = merge_scans(&body).expect("non-empty epoch");
        self.propagate_to(merged.stamp)?;

        let mut record = EpochRecord {
            stamp: merged.stamp,
            n_raw,
            n_gated: merged.len(),
            status: EpochStatus::Used,
            ego: None,
        };
        match estimate(&merged.targets, &self.cfg.ego) {
            Ok(ego) => {
                record.ego = Some(ego);
                record.status = self.apply_radar(merged.stamp, &ego)?;
            }
            Err(e) => {
                debug!("radar epoch at {} skipped: {e}", merged.stamp);
                record.status = match e {
                    Error::InsufficientTargets { .. } => EpochStatus::InsufficientTargets,
                    _ => EpochStatus::DegenerateGeometry,
                };
            }
        }
        self.out.diagnostics.epochs.push(record);

        if !merged.is_empty() {
            let f = self.filters.as_ref().expect("checked above");
            let tilt = self
                .cfg
                .mapping
                .use_attitude
                .then(|| tilt_of(&f.held.orientation));
            let pose = pose_to_transform(f.stage2.x, f.stage2.y, f.stage2.theta, tilt.as_ref());
            self.out.map.register(&pose, &merged);
        }
        Ok(())
    }

    fn apply_radar(&mut self, stamp: Timestamp, ego: &EgoVelocity) -> Result<EpochStatus> {
        let r_v = self.cfg.ego.measurement_variance(ego);
        let v_r = ego.forward_speed();
        let mode = self.cfg.mode;
        let f = self.filters.as_mut().expect("filters initialized");
        if mode == FusionMode::TwoStage {
            let acc = f.stage1.update(stamp, v_r, r_v)?;
            self.a_cc = acc.a_cc;
            self.out.stage1_trace.push(Stage1TraceRow {
                stamp,
                state: *f.stage1.state(),
                a_cc: acc.a_cc,
            });
        }
        self.last_radar_fix = Some(stamp);
        let z = Stage2Measurement {
            stamp,
            theta_imu: yaw_of(&f.held.orientation),
            v_r,
            r: self.cfg.stage2.measurement_noise(r_v),
        };
        match stage2::update(&f.stage2, &z) {
            Ok((s, rec)) => {
                f.stage2 = s;
                self.out.diagnostics.innovations.push(rec);
                Ok(EpochStatus::Used)
            }
            Err(e @ Error::SingularInnovationCovariance { .. }) => {
                warn!("stage2 update at {stamp} skipped: {e}");
                Ok(EpochStatus::SingularInnovation)
            }
            Err(e) => Err(e),
        }
    }

    /// Zero-velocity pseudo-measurement while idle without radar fixes.
    fn maybe_zero_velocity(&mut self, t: Timestamp) -> Result<()> {
        let cfg = self.cfg.stage2;
        let Some(f) = self.filters.as_ref() else {
            return Ok(());
        };
        let since_fix = t.secs() - self.last_radar_fix.or(self.start).map_or(t.secs(), |s| s.secs());
        let since_zupt = self.last_zupt.map_or(f64::INFINITY, |z| t.secs() - z.secs());
        let a = self.drive_accel(&f.held);
        if since_fix <= cfg.zupt_idle_time
            || a.abs() >= cfg.zupt_accel_threshold
            || since_zupt < cfg.zupt_interval
        {
            return Ok(());
        }
        let z = Stage2Measurement {
            stamp: t,
            theta_imu: yaw_of(&f.held.orientation),
            v_r: 0.0,
            r: Matrix2::new(cfg.sigma_theta * cfg.sigma_theta, 0.0, 0.0, cfg.zupt_variance),
        };
        let f = self.filters.as_mut().expect("checked above");
        match stage2::update(&f.stage2, &z) {
            Ok((s, _)) => {
                f.stage2 = s;
                self.last_zupt = Some(t);
                self.out.diagnostics.zero_velocity_updates += 1;
                Ok(())
            }
            Err(Error::SingularInnovationCovariance { .. }) => Ok(()),
            Err(e) => Err(e),
        }
    }
}

/// Runs the whole loop over a time-ordered event stream.
pub fn run_pipeline<I>(events: I, rig: &Rig, cfg: &PipelineConfig) -> Result<PipelineOutput>
where
    I: IntoIterator<Item = Event>,
{
    let mut p = Pipeline::new(rig.clone(), *cfg)?;
    for e in events {
        p.push(e)?;
    }
    p.finish()
}
