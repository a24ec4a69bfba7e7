//! Accelerometer offset models and the synthetic IMU/AHRS stream.

use mrio_core::{ImuSample, Timestamp, Vec3};
use nalgebra::{UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::profile::TruthSample;

pub const GRAVITY: f64 = 9.80665;

/// Additive forward-axis accelerometer offset over time.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BiasModel {
    /// `b(t) = c`.
    Constant { c: f64 },
    /// `b(t) = b0 + slope·t`.
    LinearDrift { b0: f64, slope: f64 },
    /// `b(t+dt) = b(t) + N(0, psd·dt)`.
    RandomWalk { b0: f64, psd: f64 },
}

impl Default for BiasModel {
    fn default() -> Self {
        BiasModel::Constant { c: 0.3 }
    }
}

impl BiasModel {
    /// Offset at each sample time. Random-walk increments come from `rng`.
    pub fn sample_path(&self, times: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        match *self {
            BiasModel::Constant { c } => vec![c; times.len()],
            BiasModel::LinearDrift { b0, slope } => times.iter().map(|t| b0 + slope * t).collect(),
            BiasModel::RandomWalk { b0, psd } => {
                let mut b = b0;
                let mut prev = times.first().copied().unwrap_or(0.0);
                times
                    .iter()
                    .map(|&t| {
                        let dt = t - prev;
                        if dt > 0.0 && psd > 0.0 {
                            let step = Normal::new(0.0, (psd * dt).sqrt()).expect("finite sigma");
                            b += step.sample(rng);
                        }
                        prev = t;
                        b
                    })
                    .collect()
            }
        }
    }
}

/// White-noise densities of an IMU plus the heading drift of its AHRS.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImuNoisePreset {
    /// m/s²/√Hz.
    pub accel_noise_density: f64,
    /// rad/s/√Hz; also the angle random walk of the AHRS heading.
    pub gyro_noise_density: f64,
    /// rad/s.
    pub yaw_drift_rate: f64,
}

impl ImuNoisePreset {
    pub const NONE: Self = Self {
        accel_noise_density: 0.0,
        gyro_noise_density: 0.0,
        yaw_drift_rate: 0.0,
    };

    /// Cube Orange: 100 µg/√Hz accelerometer, 4 mdps/√Hz gyro. Gyro bias
    /// stability is unlisted; 5e-5 rad/s heading drift is assumed.
    pub fn px4() -> Self {
        Self {
            accel_noise_density: 100e-6 * GRAVITY,
            gyro_noise_density: 4e-3_f64.to_radians(),
            yaw_drift_rate: 5e-5,
        }
    }

    /// VN-100: 0.14 mg/√Hz accelerometer, 0.0035 °/√s gyro, < 3.5 °/h gyro
    /// bias stability taken as the heading drift.
    pub fn vectornav() -> Self {
        Self {
            accel_noise_density: 0.14e-3 * GRAVITY,
            gyro_noise_density: 0.0035_f64.to_radians(),
            yaw_drift_rate: 3.5_f64.to_radians() / 3600.0,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "px4" | "pixhawk" => Some(Self::px4()),
            "vectornav" | "vn100" => Some(Self::vectornav()),
            "none" => Some(Self::NONE),
            _ => None,
        }
    }
}

/// IMU readings for a truth trace: forward specific force carries the offset,
/// gravity projection from any slope and white noise; the yaw rate and AHRS
/// heading carry gyro noise, the latter integrated into an angle random walk
/// plus a linear drift.
pub fn synth_imu(
    truth: &[TruthSample],
    bias: &BiasModel,
    preset: &ImuNoisePreset,
    imu_rate: f64,
    seed: u64,
) -> Vec<ImuSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let times: Vec<f64> = truth.iter().map(|s| s.t).collect();
    let offsets = bias.sample_path(&times, &mut rng);
    let sigma_a = preset.accel_noise_density * imu_rate.sqrt();
    let sigma_g = preset.gyro_noise_density * imu_rate.sqrt();
    let dt = 1.0 / imu_rate;
    let mut noise = |sigma: f64| {
        if sigma > 0.0 {
            Normal::new(0.0, sigma).expect("finite sigma").sample(&mut rng)
        } else {
            0.0
        }
    };
    let mut heading_walk = 0.0;
    truth
        .iter()
        .zip(offsets)
        .map(|(s, b)| {
            let slope = s.slope_deg.to_radians();
            let accel = Vec3::new(
                s.accel + b + GRAVITY * slope.sin() + noise(sigma_a),
                s.v * s.yaw_rate + noise(sigma_a),
                GRAVITY * slope.cos() + noise(sigma_a),
            );
            let gyro = Vec3::new(noise(sigma_g), noise(sigma_g), s.yaw_rate + noise(sigma_g));
            let yaw = s.theta + preset.yaw_drift_rate * s.t + heading_walk;
            heading_walk += noise(sigma_g) * dt;
            ImuSample {
                stamp: Timestamp::new(s.t).expect("non-negative sim time"),
                accel,
                gyro,
                orientation: UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{generate_truth, Segment, TrajectoryProfile};
    use approx::assert_abs_diff_eq;

    fn rest(seconds: f64) -> Vec<TruthSample> {
        generate_truth(&TrajectoryProfile {
            segments: vec![Segment::new(seconds, 0.0, 0.0)],
            initial_speed: 0.0,
            ..TrajectoryProfile::straight(1.0, 1.0)
        })
    }

    #[test]
    fn constant_offset_without_noise() {
        let imu = synth_imu(&rest(2.0), &BiasModel::Constant { c: 0.2 }, &ImuNoisePreset::NONE, 200.0, 1);
        assert!(imu.iter().all(|s| s.accel.x == 0.2));
    }

    #[test]
    fn linear_drift_closed_form() {
        let imu = synth_imu(
            &rest(10.0),
            &BiasModel::LinearDrift { b0: 0.0, slope: 0.01 },
            &ImuNoisePreset::NONE,
            200.0,
            1,
        );
        let last = imu.last().unwrap();
        assert_abs_diff_eq!(last.stamp.secs(), 10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(last.accel.x, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn random_walk_variance_grows_linearly() {
        let psd = 0.01;
        let horizon = 5.0;
        let times: Vec<f64> = (0..=500).map(|k| k as f64 * 0.01).collect();
        let finals: Vec<f64> = (0..1000)
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                *BiasModel::RandomWalk { b0: 0.0, psd }
                    .sample_path(&times, &mut rng)
                    .last()
                    .unwrap()
            })
            .collect();
        let mean = finals.iter().sum::<f64>() / finals.len() as f64;
        let var = finals.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (finals.len() - 1) as f64;
        let expected = psd * horizon;
        assert!((var - expected).abs() / expected < 0.1, "var {var} vs {expected}");
    }

    #[test]
    fn slope_adds_gravity_projection() {
        let mut truth = rest(1.0);
        for s in &mut truth {
            s.slope_deg = 5.0;
        }
        let imu = synth_imu(&truth, &BiasModel::Constant { c: 0.0 }, &ImuNoisePreset::NONE, 200.0, 0);
        assert_abs_diff_eq!(imu[0].accel.x, GRAVITY * 5f64.to_radians().sin(), epsilon = 1e-12);
    }

    #[test]
    fn seed_determinism() {
        let truth = generate_truth(&TrajectoryProfile::straight(5.0, 1.0));
        let bias = BiasModel::RandomWalk { b0: 0.1, psd: 1e-3 };
        let a = synth_imu(&truth, &bias, &ImuNoisePreset::px4(), 200.0, 9);
        let b = synth_imu(&truth, &bias, &ImuNoisePreset::px4(), 200.0, 9);
        let c = synth_imu(&truth, &bias, &ImuNoisePreset::px4(), 200.0, 10);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn presets_by_name() {
        assert_eq!(ImuNoisePreset::by_name("px4"), Some(ImuNoisePreset::px4()));
        assert_eq!(ImuNoisePreset::by_name("vectornav"), Some(ImuNoisePreset::vectornav()));
        assert!(ImuNoisePreset::by_name("mystery").is_none());
        // 100 µg/√Hz
        assert_abs_diff_eq!(ImuNoisePreset::px4().accel_noise_density, 9.80665e-4, epsilon = 1e-12);
    }
}
