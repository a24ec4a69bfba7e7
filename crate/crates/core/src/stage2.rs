//! Planar pose filter over `[x, y, v, θ]`.
//!
//! Prediction runs at IMU rate with unicycle kinematics driven by the
//! offset-free forward acceleration and the gyro yaw rate. Updates arrive at
//! radar rate and observe `[θ, v]`: heading from the IMU attitude output and
//! forward speed from the Doppler least-squares fit.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Timestamp};
use crate::stage1::check_dt;

/// Condition number of `S` above which an update is refused.
pub const MAX_INNOVATION_CONDITION: f64 = 1e12;

pub const IX: usize = 0;
pub const IY: usize = 1;
pub const IV: usize = 2;
pub const ITHETA: usize = 3;

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Stage2State {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub theta: f64,
    pub cov: Matrix4<f64>,
}

impl Stage2State {
    pub fn mean(&self) -> Vector4<f64> {
        Vector4::new(self.x, self.y, self.v, self.theta)
    }

    fn with_mean(mean: Vector4<f64>, cov: Matrix4<f64>) -> Self {
        Self {
            x: mean[IX],
            y: mean[IY],
            v: mean[IV],
            theta: wrap_angle(mean[ITHETA]),
            cov,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Stage2Measurement {
    pub stamp: Timestamp,
    pub theta_imu: f64,
    pub v_r: f64,
    pub r: Matrix2<f64>,
}

/// Innovation and its covariance for one accepted update.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct InnovationRecord {
    pub stamp: Timestamp,
    pub nu: Vector2<f64>,
    pub s: Matrix2<f64>,
    /// Normalized innovation squared `νᵀS⁻¹ν`.
    pub nis: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Stage2Config {
    /// Position process noise PSD, m²/s.
    pub q_pos: f64,
    /// Speed process noise PSD, (m/s²)²·s.
    pub q_v: f64,
    /// Heading process noise PSD, rad²/s.
    pub q_theta: f64,
    /// Standard deviation of the IMU heading measurement, rad.
    pub sigma_theta: f64,
    pub init_var_pos: f64,
    pub init_var_v: f64,
    pub init_var_theta: f64,
    /// Forward acceleration magnitude below which the platform may be idle.
    pub zupt_accel_threshold: f64,
    /// Time without radar epochs before zero-velocity pseudo-updates begin.
    pub zupt_idle_time: f64,
    /// Interval between zero-velocity pseudo-updates.
    pub zupt_interval: f64,
    pub zupt_variance: f64,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self {
            q_pos: 1e-6,
            q_v: 2e-6,
            q_theta: 1e-6,
            // 0.5 deg, the VN-100 pitch/roll accuracy used as a yaw proxy
            sigma_theta: 0.5_f64.to_radians(),
            init_var_pos: 1e-4,
            init_var_v: 1e-2,
            init_var_theta: 1e-4,
            zupt_accel_threshold: 0.05,
            zupt_idle_time: 1.0,
            zupt_interval: 0.1,
            zupt_variance: 0.03 * 0.03,
        }
    }
}

impl Stage2Config {
    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.q_pos,
            self.q_v,
            self.q_theta,
            self.sigma_theta,
            self.init_var_pos,
            self.init_var_v,
            self.init_var_theta,
            self.zupt_idle_time,
            self.zupt_interval,
            self.zupt_variance,
        ];
        if vals.iter().all(|x| x.is_finite() && *x > 0.0) && self.zupt_accel_threshold >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "stage2 noise terms and timings must be strictly positive".into(),
            ))
        }
    }

    /// `Q·dt` for one prediction step.
    pub fn process_noise(&self, dt: f64) -> Matrix4<f64> {
        Matrix4::from_diagonal(&Vector4::new(self.q_pos, self.q_pos, self.q_v, self.q_theta)) * dt
    }

    pub fn initial_state(&self, theta0: f64) -> Stage2State {
        Stage2State {
            x: 0.0,
            y: 0.0,
            v: 0.0,
            theta: wrap_angle(theta0),
            cov: Matrix4::from_diagonal(&Vector4::new(
                self.init_var_pos,
                self.init_var_pos,
                self.init_var_v,
                self.init_var_theta,
            )),
        }
    }

    /// `R_m = diag(σ_θ², r_v)`.
    pub fn measurement_noise(&self, r_v: f64) -> Matrix2<f64> {
        Matrix2::new(self.sigma_theta * self.sigma_theta, 0.0, 0.0, r_v)
    }
}

/// Unicycle transition without wrapping the heading.
pub fn transition(mean: &Vector4<f64>, a_cc: f64, omega: f64, dt: f64) -> Vector4<f64> {
    let (s, c) = mean[ITHETA].sin_cos();
    Vector4::new(
        mean[IX] + mean[IV] * c * dt,
        mean[IY] + mean[IV] * s * dt,
        mean[IV] + a_cc * dt,
        mean[ITHETA] + omega * dt,
    )
}

/// Analytic Jacobian of [`transition`] with respect to the state.
pub fn transition_jacobian(mean: &Vector4<f64>, dt: f64) -> Matrix4<f64> {
    let (s, c) = mean[ITHETA].sin_cos();
    let v = mean[IV];
    Matrix4::new(
        1.0, 0.0, c * dt, -v * s * dt, //
        0.0, 1.0, s * dt, v * c * dt, //
        0.0, 0.0, 1.0, 0.0, //
        0.0, 0.0, 0.0, 1.0,
    )
}

pub fn predict(
    s: &Stage2State,
    a_cc: f64,
    omega: f64,
    dt: f64,
    q: &Matrix4<f64>,
) -> Result<Stage2State> {
    check_dt(dt)?;
    let mean = s.mean();
    let f = transition_jacobian(&mean, dt);
    let cov = f * s.cov * f.transpose() + q;
    Ok(Stage2State::with_mean(
        transition(&mean, a_cc, omega, dt),
        symmetrize(cov),
    ))
}

/// Measurement Jacobian: the first row picks θ, the second v.
pub fn measurement_matrix() -> Matrix2x4<f64> {
    Matrix2x4::new(
        0.0, 0.0, 0.0, 1.0, //
        0.0, 0.0, 1.0, 0.0,
    )
}

pub fn innovation(s: &Stage2State, z: &Stage2Measurement) -> Vector2<f64> {
    Vector2::new(wrap_angle(z.theta_imu - s.theta), z.v_r - s.v)
}

fn condition_2x2(m: &Matrix2<f64>) -> f64 {
    let eig = m.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if lo <= 0.0 || !lo.is_finite() || !hi.is_finite() {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn update(s: &Stage2State, z: &Stage2Measurement) -> Result<(Stage2State, InnovationRecord)> {
    if !z.theta_imu.is_finite() || !z.v_r.is_finite() {
        return Err(Error::InvalidMeasurement("non-finite stage2 measurement".into()));
    }
    let h = measurement_matrix();
    let nu = innovation(s, z);
    let s_mat = symmetrize2(h * s.cov * h.transpose() + z.r);
    let condition = condition_2x2(&s_mat);
    if condition > MAX_INNOVATION_CONDITION {
        return Err(Error::SingularInnovationCovariance { condition });
    }
    let s_inv = s_mat
        .try_inverse()
        .ok_or(Error::SingularInnovationCovariance { condition })?;
    let k: Matrix4x2<f64> = s.cov * h.transpose() * s_inv;
    let i_kh = Matrix4::identity() - k * h;
    let cov = i_kh * s.cov * i_kh.transpose() + k * z.r * k.transpose();
    let mean = s.mean() + k * nu;
    let nis = (nu.transpose() * s_inv * nu)[0];
    Ok((
        Stage2State::with_mean(mean, symmetrize(cov)),
        InnovationRecord {
            stamp: z.stamp,
            nu,
            s: s_mat,
            nis,
        },
    ))
}

fn symmetrize(m: Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}

fn symmetrize2(m: Matrix2<f64>) -> Matrix2<f64> {
    (m + m.transpose()) * 0.5
}
