//! Bias-aware velocity filter.
//!
//! Two-state EKF on the forward axis: velocity `v` and the additive offset `b`
//! contained in the accelerometer reading. The true forward specific force is
//! `a_meas - b`, so prediction integrates `(a_meas - b)·dt`. Radar ego-speed
//! observes `v` directly. Differentiating the filtered velocity between radar
//! epochs yields the offset-free acceleration handed to the pose filter.

use nalgebra::{Matrix2, RowVector2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Timestamp;

/// Largest prediction step accepted, seconds.
pub const MAX_DT: f64 = 0.1;

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Stage1State {
    pub v: f64,
    pub b: f64,
    pub cov: Matrix2<f64>,
}

impl Stage1State {
    pub fn new(v: f64, b: f64, var_v: f64, var_b: f64) -> Self {
        Self {
            v,
            b,
            cov: Matrix2::new(var_v, 0.0, 0.0, var_b),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Stage1Config {
    /// Velocity process noise PSD, (m/s²)²·s.
    pub q_v: f64,
    /// Offset random-walk PSD, (m/s³)²·s.
    pub q_b: f64,
    /// Radar speed variance used when the caller has no better value, (m/s)².
    pub r_v: f64,
    /// EMA weight on the newest finite difference, in (0, 1].
    pub smoothing_alpha: f64,
    pub init_var_v: f64,
    pub init_var_b: f64,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self {
            q_v: 1e-5,
            q_b: 1e-6,
            r_v: 0.03 * 0.03,
            smoothing_alpha: 0.6,
            init_var_v: 1e-2,
            init_var_b: 0.1,
        }
    }
}

impl Stage1Config {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.q_v, self.q_b, self.r_v, self.init_var_v, self.init_var_b]
            .iter()
            .all(|x| x.is_finite() && *x > 0.0);
        if !positive {
            return Err(Error::InvalidConfig(
                "stage1 noise terms must be strictly positive".into(),
            ));
        }
        if !(self.smoothing_alpha > 0.0 && self.smoothing_alpha <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "smoothing_alpha must lie in (0, 1], got {}",
                self.smoothing_alpha
            )));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> Stage1State {
        Stage1State::new(0.0, 0.0, self.init_var_v, self.init_var_b)
    }
}

pub(crate) fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0) {
        Err(Error::NonMonotonicTime { dt })
    } else if dt > MAX_DT {
        Err(Error::DtTooLarge { dt, max: MAX_DT })
    } else {
        Ok(())
    }
}

pub fn predict(s: &Stage1State, a_meas: f64, dt: f64, cfg: &Stage1Config) -> Result<Stage1State> {
    check_dt(dt)?;
    let f = Matrix2::new(1.0, -dt, 0.0, 1.0);
    let q = Matrix2::new(cfg.q_v * dt, 0.0, 0.0, cfg.q_b * dt);
    let cov = f * s.cov * f.transpose() + q;
    Ok(Stage1State {
        v: s.v + (a_meas - s.b) * dt,
        b: s.b,
        cov: symmetrize(cov),
    })
}

/// Scalar radar speed update with Joseph-form covariance.
pub fn update(s: &Stage1State, v_lsq: f64, r_v: f64) -> Result<Stage1State> {
    if !v_lsq.is_finite() || !(r_v > 0.0) {
        return Err(Error::InvalidMeasurement(format!(
            "stage1 update with v = {v_lsq}, r = {r_v}"
        )));
    }
    let h = RowVector2::new(1.0, 0.0);
    let innovation = v_lsq - s.v;
    let s_var = (h * s.cov * h.transpose())[0] + r_v;
    let k: Vector2<f64> = s.cov * h.transpose() / s_var;
    let i_kh = Matrix2::identity() - k * h;
    let cov = i_kh * s.cov * i_kh.transpose() + k * r_v * k.transpose();
    Ok(Stage1State {
        v: s.v + k[0] * innovation,
        b: s.b + k[1] * innovation,
        cov: symmetrize(cov),
    })
}

fn symmetrize(m: Matrix2<f64>) -> Matrix2<f64> {
    (m + m.transpose()) * 0.5
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct CorrectedAccel {
    pub stamp: Timestamp,
    pub a_cc: f64,
}

/// Differentiates two velocity samples and blends the slope into an EMA.
pub fn corrected_accel(
    v_now: f64,
    v_prev: f64,
    t_now: Timestamp,
    t_prev: Timestamp,
    prev_smoothed: f64,
    alpha: f64,
) -> Result<CorrectedAccel> {
    let dt = t_now.secs() - t_prev.secs();
    if !(dt > 0.0) {
        return Err(Error::NonMonotonicTime { dt });
    }
    let raw = (v_now - v_prev) / dt;
    Ok(CorrectedAccel {
        stamp: t_now,
        a_cc: alpha * raw + (1.0 - alpha) * prev_smoothed,
    })
}

/// Incremental form of the filter: owns the state, the last prediction time
/// and the finite-difference memory.
#[derive(Clone, Debug)]
pub struct Stage1Filter {
    cfg: Stage1Config,
    state: Stage1State,
    time: Option<Timestamp>,
    last_velocity: Option<(Timestamp, f64)>,
    smoothed: f64,
}

impl Stage1Filter {
    pub fn new(cfg: Stage1Config) -> Self {
        Self {
            state: cfg.initial_state(),
            cfg,
            time: None,
            last_velocity: None,
            smoothed: 0.0,
        }
    }

    pub fn state(&self) -> &Stage1State {
        &self.state
    }

    pub fn time(&self) -> Option<Timestamp> {
        self.time
    }

    pub fn config(&self) -> &Stage1Config {
        &self.cfg
    }

    /// Anchors the filter clock without propagating.
    pub fn start(&mut self, t: Timestamp) {
        self.time = Some(t);
    }

    /// Propagates to `t` holding `a_meas` over the interval.
    pub fn predict_to(&mut self, t: Timestamp, a_meas: f64) -> Result<()> {
        match self.time {
            None => self.time = Some(t),
            Some(t0) => {
                self.state = predict(&self.state, a_meas, t.secs() - t0.secs(), &self.cfg)?;
                self.time = Some(t);
            }
        }
        Ok(())
    }

    /// Applies a radar speed and returns the corrected acceleration stamped at
    /// `t`. The first update returns zero.
    pub fn update(&mut self, t: Timestamp, v_lsq: f64, r_v: f64) -> Result<CorrectedAccel> {
        self.state = update(&self.state, v_lsq, r_v)?;
        let out = match self.last_velocity {
            Some((t_prev, v_prev)) if t.secs() > t_prev.secs() => corrected_accel(
                self.state.v,
                v_prev,
                t,
                t_prev,
                self.smoothed,
                self.cfg.smoothing_alpha,
            )?,
            Some((_, _)) => CorrectedAccel {
                stamp: t,
                a_cc: self.smoothed,
            },
            None => CorrectedAccel { stamp: t, a_cc: 0.0 },
        };
        self.smoothed = out.a_cc;
        self.last_velocity = Some((t, self.state.v));
        Ok(out)
    }
}

/// Forward-axis accelerometer sample.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct AccelSample {
    pub stamp: Timestamp,
    pub a_meas: f64,
}

/// Radar forward speed with its variance.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SpeedSample {
    pub stamp: Timestamp,
    pub v: f64,
    pub r_v: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Stage1Run {
    /// State after every radar update, with its stamp.
    pub states: Vec<(Timestamp, Stage1State)>,
    pub accels: Vec<CorrectedAccel>,
    /// Final state, including any prediction after the last update.
    pub last: Option<Stage1State>,
}

/// Error from a stream run, tagged with the offending stream position.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{source} at {stream} sample {index}")]
pub struct StreamError {
    pub stream: &'static str,
    pub index: usize,
    pub source: Error,
}

/// Runs the filter over time-ordered accelerometer and radar-speed streams.
/// Every accelerometer sample predicts (holding the previous reading over the
/// interval); every radar sample updates after predicting to its stamp. On a
/// tie the accelerometer sample is consumed first.
pub fn run_stage1(
    imu: &[AccelSample],
    radar: &[SpeedSample],
    cfg: &Stage1Config,
) -> std::result::Result<Stage1Run, StreamError> {
    cfg.validate().map_err(|source| StreamError {
        stream: "config",
        index: 0,
        source,
    })?;
    let mut filter = Stage1Filter::new(*cfg);
    let mut out = Stage1Run::default();
    let mut held: Option<f64> = None;
    let (mut i, mut j) = (0, 0);
    while i < imu.len() || j < radar.len() {
        let take_imu = match (imu.get(i), radar.get(j)) {
            (Some(a), Some(r)) => a.stamp.secs() <= r.stamp.secs(),
            (Some(_), None) => true,
            _ => false,
        };
        if take_imu {
            let s = imu[i];
            let step = match held {
                Some(a) => filter.predict_to(s.stamp, a),
                None => {
                    filter.start(s.stamp);
                    Ok(())
                }
            };
            step.map_err(|source| StreamError {
                stream: "imu",
                index: i,
                source,
            })?;
            held = Some(s.a_meas);
            i += 1;
        } else {
            let r = radar[j];
            let tag = |source| StreamError {
                stream: "radar",
                index: j,
                source,
            };
            if let (Some(a), Some(t0)) = (held, filter.time()) {
                if r.stamp.secs() > t0.secs() {
                    filter.predict_to(r.stamp, a).map_err(tag)?;
                }
            }
            let acc = filter.update(r.stamp, r.v, r.r_v).map_err(tag)?;
            out.states.push((r.stamp, *filter.state()));
            out.accels.push(acc);
            j += 1;
        }
    }
    out.last = Some(*filter.state());
    Ok(out)
}
