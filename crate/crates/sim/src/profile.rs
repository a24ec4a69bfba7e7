//! Piecewise-constant command profiles and the ground-truth integrator.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Constant forward acceleration and yaw rate held for `duration` seconds.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub duration: f64,
    pub accel: f64,
    pub yaw_rate: f64,
    /// Road grade in degrees. Only its gravity projection reaches the
    /// accelerometer; the truth stays planar.
    #[serde(default)]
    pub slope_deg: f64,
}

impl Segment {
    pub fn new(duration: f64, accel: f64, yaw_rate: f64) -> Self {
        Self {
            duration,
            accel,
            yaw_rate,
            slope_deg: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryProfile {
    pub segments: Vec<Segment>,
    pub imu_rate: f64,
    pub radar_rate: f64,
    pub initial_speed: f64,
    pub initial_heading: f64,
}

impl Default for TrajectoryProfile {
    fn default() -> Self {
        Self::rounded_loop()
    }
}

impl TrajectoryProfile {
    /// Roughly 107 m rounded-rectangle loop at 1 m/s with 3 m corner radius,
    /// bracketed by 2 s of rest and 20 s speed ramps.
    pub fn rounded_loop() -> Self {
        let speed = 1.0;
        let radius = 3.0;
        let omega = speed / radius;
        let turn = (PI / 2.0) / omega;
        let ramp = 20.0;
        let a = speed / ramp;
        let segments = vec![
            Segment::new(2.0, 0.0, 0.0),
            Segment::new(ramp, a, 0.0),
            Segment::new(18.0, 0.0, 0.0),
            Segment::new(turn, 0.0, omega),
            Segment::new(12.0, 0.0, 0.0),
            Segment::new(turn, 0.0, omega),
            Segment::new(26.0, 0.0, 0.0),
            Segment::new(turn, 0.0, omega),
            Segment::new(12.0, 0.0, 0.0),
            Segment::new(turn, 0.0, omega),
            Segment::new(ramp, -a, 0.0),
            Segment::new(2.0, 0.0, 0.0),
        ];
        Self {
            segments,
            imu_rate: 200.0,
            radar_rate: 10.0,
            initial_speed: 0.0,
            initial_heading: 0.0,
        }
    }

    /// Straight run of `length` meters at `speed` m/s, starting at speed.
    pub fn straight(length: f64, speed: f64) -> Self {
        Self {
            segments: vec![Segment::new(length / speed, 0.0, 0.0)],
            imu_rate: 200.0,
            radar_rate: 10.0,
            initial_speed: speed,
            initial_heading: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.segments.is_empty() {
            return Err("profile has no segments".into());
        }
        if self
            .segments
            .iter()
            .any(|s| !(s.duration > 0.0) || !s.accel.is_finite() || !s.yaw_rate.is_finite())
        {
            return Err("segment durations must be positive and rates finite".into());
        }
        if !(self.imu_rate > 0.0 && self.radar_rate > 0.0) {
            return Err("rates must be positive".into());
        }
        if self.imu_rate < self.radar_rate {
            return Err("imu_rate must be at least radar_rate".into());
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.imu_rate
    }

    /// Integer number of IMU steps per segment.
    pub fn segment_steps(&self) -> Vec<usize> {
        self.segments
            .iter()
            .map(|s| (s.duration * self.imu_rate).round().max(1.0) as usize)
            .collect()
    }

    pub fn duration(&self) -> f64 {
        self.segment_steps().iter().sum::<usize>() as f64 * self.dt()
    }

    /// Every IMU step the radar fires on.
    pub fn radar_decimation(&self) -> usize {
        (self.imu_rate / self.radar_rate).round().max(1.0) as usize
    }
}

/// Ground-truth state at one IMU instant. `accel`, `yaw_rate` and `slope_deg`
/// are the commands held over the following interval.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct TruthSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub theta: f64,
    pub accel: f64,
    pub yaw_rate: f64,
    pub slope_deg: f64,
}

/// Integrates unicycle kinematics over the profile at IMU rate. Each IMU
/// interval is integrated with classical RK4 under the held commands, so the
/// samples track the continuous-time motion rather than a first-order
/// discretization of it.
pub fn generate_truth(profile: &TrajectoryProfile) -> Vec<TruthSample> {
    let dt = profile.dt();
    let steps = profile.segment_steps();
    let total: usize = steps.iter().sum();
    let mut out = Vec::with_capacity(total + 1);
    let (mut x, mut y, mut v, mut theta) = (0.0, 0.0, profile.initial_speed, profile.initial_heading);
    let mut k = 0usize;
    for (seg, n) in profile.segments.iter().zip(&steps) {
        for _ in 0..*n {
            out.push(TruthSample {
                t: k as f64 * dt,
                x,
                y,
                v,
                theta,
                accel: seg.accel,
                yaw_rate: seg.yaw_rate,
                slope_deg: seg.slope_deg,
            });
            (x, y, v, theta) = rk4_step([x, y, v, theta], seg.accel, seg.yaw_rate, dt).into();
            k += 1;
        }
    }
    out.push(TruthSample {
        t: k as f64 * dt,
        x,
        y,
        v,
        theta,
        accel: 0.0,
        yaw_rate: 0.0,
        slope_deg: 0.0,
    });
    out
}

fn deriv(s: [f64; 4], a: f64, w: f64) -> [f64; 4] {
    [s[2] * s[3].cos(), s[2] * s[3].sin(), a, w]
}

fn rk4_step(s: [f64; 4], a: f64, w: f64, h: f64) -> (f64, f64, f64, f64) {
    let add = |s: [f64; 4], k: [f64; 4], c: f64| [s[0] + c * k[0], s[1] + c * k[1], s[2] + c * k[2], s[3] + c * k[3]];
    let k1 = deriv(s, a, w);
    let k2 = deriv(add(s, k1, h / 2.0), a, w);
    let k3 = deriv(add(s, k2, h / 2.0), a, w);
    let k4 = deriv(add(s, k3, h), a, w);
    let r: Vec<f64> = (0..4)
        .map(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    (r[0], r[1], r[2], r[3])
}

/// Cumulative planar path length at each sample.
pub fn path_length(truth: &[TruthSample]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(truth.len());
    let mut prev: Option<&TruthSample> = None;
    for s in truth {
        if let Some(p) = prev {
            acc += (s.x - p.x).hypot(s.y - p.y);
        }
        out.push(acc);
        prev = Some(s);
    }
    out
}
