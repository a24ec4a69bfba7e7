//! Multi-radar Doppler scans of a static tunnel, with near-field clutter.

use mrio_core::{Extrinsics, Pose, RadarScan, RadarTarget, Timestamp, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::profile::TruthSample;
use crate::world::TunnelWorld;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadarModel {
    pub max_range: f64,
    /// Full horizontal field of view, degrees.
    pub fov_azimuth_deg: f64,
    /// Full vertical field of view, degrees.
    pub fov_elevation_deg: f64,
    /// Probability that a visible surface point produces a return.
    pub detection_prob: f64,
    /// Include the `ω × r` velocity of off-center mounts in the Doppler.
    pub lever_arm: bool,
    /// Doppler standard deviation, m/s.
    pub doppler_sigma: f64,
    pub max_doppler: f64,
}

impl Default for RadarModel {
    fn default() -> Self {
        Self {
            max_range: 8.0,
            fov_azimuth_deg: 60.0,
            fov_elevation_deg: 60.0,
            detection_prob: 0.08,
            lever_arm: true,
            doppler_sigma: 0.03,
            max_doppler: 10.0,
        }
    }
}

/// Spurious returns scattered close to the sensor.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClutterModel {
    /// Mean number of spurious returns per scan.
    pub rate: f64,
    pub radius_min: f64,
    pub radius_max: f64,
    /// Clutter Doppler is uniform in `[-spread, spread]`.
    pub doppler_spread: f64,
}

impl Default for ClutterModel {
    fn default() -> Self {
        Self {
            rate: 5.0,
            radius_min: 0.05,
            radius_max: 0.4,
            doppler_spread: 1.0,
        }
    }
}

impl ClutterModel {
    pub const NONE: Self = Self {
        rate: 0.0,
        radius_min: 0.05,
        radius_max: 0.4,
        doppler_spread: 0.0,
    };
}

/// A generated scan with the ground-truth bookkeeping the estimator never sees.
#[derive(Clone, Debug, PartialEq)]
pub struct SimScan {
    pub scan: RadarScan,
    /// Per target: `Some(world point index)` for surface returns, `None` for
    /// clutter.
    pub source: Vec<Option<usize>>,
    /// True sensor velocity in the sensor frame.
    pub sensor_velocity: Vec3,
}

impl SimScan {
    pub fn is_clutter(&self, i: usize) -> bool {
        self.source[i].is_none()
    }
}

pub fn body_pose(s: &TruthSample) -> Pose {
    Pose::from_euler(0.0, 0.0, s.theta, Vec3::new(s.x, s.y, 0.0))
}

fn in_fov(p: &Vec3, model: &RadarModel) -> bool {
    if p.x <= 0.0 {
        return false;
    }
    let az = p.y.atan2(p.x).abs();
    let el = p.z.atan2(p.x.hypot(p.y)).abs();
    az <= model.fov_azimuth_deg.to_radians() / 2.0 && el <= model.fov_elevation_deg.to_radians() / 2.0
}

/// One scan per radar at every `decimation`-th truth sample.
pub fn synth_radar(
    truth: &[TruthSample],
    world: &TunnelWorld,
    rig: &[Extrinsics],
    model: &RadarModel,
    clutter: &ClutterModel,
    decimation: usize,
    seed: u64,
) -> Vec<SimScan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (model.doppler_sigma > 0.0).then(|| Normal::new(0.0, model.doppler_sigma).expect("finite sigma"));
    let poisson = (clutter.rate > 0.0).then(|| Poisson::new(clutter.rate).expect("positive rate"));
    let half_az = model.fov_azimuth_deg.to_radians() / 2.0;
    let half_el = model.fov_elevation_deg.to_radians() / 2.0;
    let mut out = Vec::new();

    for s in truth.iter().step_by(decimation.max(1)) {
        let stamp = Timestamp::new(s.t).expect("non-negative sim time");
        let w_t_b = body_pose(s);
        let v_body = Vec3::new(s.v, 0.0, 0.0);
        let omega = Vec3::new(0.0, 0.0, s.yaw_rate);
        let candidates = world.near(s.x, s.y, model.max_range + 1.0);

        for ext in rig {
            let w_t_s = w_t_b.compose(&ext.mount);
            let s_t_w = w_t_s.inverse();
            let mut v_sensor_body = v_body;
            if model.lever_arm {
                v_sensor_body += omega.cross(&ext.mount.translation);
            }
            let v_sensor = ext.mount.inverse().rotate_vector(&v_sensor_body);

            let mut targets = Vec::new();
            let mut source = Vec::new();
            for &k in &candidates {
                let p = s_t_w.transform_point(&world.points()[k].position);
                let range = p.norm();
                if range <= 0.0 || range > model.max_range || !in_fov(&p, model) {
                    continue;
                }
                if rng.random::<f64>() >= model.detection_prob {
                    continue;
                }
                let u = p / range;
                let mut doppler = -u.dot(&v_sensor);
                if let Some(n) = &noise {
                    doppler += n.sample(&mut rng);
                }
                let doppler = doppler.clamp(-model.max_doppler, model.max_doppler);
                targets.push(RadarTarget { position: p, doppler });
                source.push(Some(k));
            }

            let n_clutter = poisson.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
            for _ in 0..n_clutter {
                let az = rng.random_range(-half_az..=half_az);
                let el = rng.random_range(-half_el..=half_el);
                let r = rng.random_range(clutter.radius_min..=clutter.radius_max);
                let p = Vec3::new(r * el.cos() * az.cos(), r * el.cos() * az.sin(), r * el.sin());
                let doppler = if clutter.doppler_spread > 0.0 {
                    rng.random_range(-clutter.doppler_spread..=clutter.doppler_spread)
                } else {
                    0.0
                };
                targets.push(RadarTarget { position: p, doppler });
                source.push(None);
            }

            out.push(SimScan {
                scan: RadarScan {
                    stamp,
                    radar_id: ext.radar_id,
                    targets,
                },
                source,
                sensor_velocity: v_sensor,
            });
        }
    }
    out
}
