//! Rigid-body transforms, timestamps and angle arithmetic.
//!
//! Rotations are stored as unit quaternions and turned into matrices only when
//! a caller asks for one. Every composition renormalizes the quaternion so
//! that long chains of transforms do not drift off the unit sphere.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix3, Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Three-vector in meters, m/s or m/s² depending on context.
pub type Vec3 = Vector3<f64>;

/// Seconds since the dataset epoch.
#[derive(Copy, Clone, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Timestamp(f64);

impl Timestamp {
    /// Builds a timestamp, rejecting negative and non-finite values.
    pub fn new(t: f64) -> Result<Self> {
        if t.is_finite() && t >= 0.0 {
            Ok(Self(t))
        } else {
            Err(Error::InvalidTimestamp(t))
        }
    }

    pub fn secs(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}", self.0)
    }
}

/// Maps an angle into `(-π, π]`. An input of exactly `π` (or any odd multiple
/// that lands on it) is returned as `+π`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let r = a.rem_euclid(two_pi);
    if r > PI {
        r - two_pi
    } else {
        r
    }
}

/// Rigid transform `T = [R t; 0 1]` mapping points from a child frame into a
/// parent frame.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Builds a pose from a raw `(w, x, y, z)` quaternion, normalizing it.
    /// Fails for a zero or non-finite quaternion.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64, translation: Vec3) -> Result<Self> {
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !n.is_finite() || n < 1e-12 || !translation.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidPose);
        }
        Ok(Self::new(Unit::new_normalize(q), translation))
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    /// Pure rotation about +z.
    pub fn from_yaw(yaw: f64) -> Self {
        Self::new(UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw), Vec3::zeros())
    }

    /// Rotation built as yaw (z) * pitch (y) * roll (x), intrinsic ZYX.
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64, translation: Vec3) -> Self {
        Self::new(UnitQuaternion::from_euler_angles(roll, pitch, yaw), translation)
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let q = self.rotation * other.rotation;
        Pose {
            rotation: UnitQuaternion::new_normalize(q.into_inner()),
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose {
            rotation: inv,
            translation: -(inv * self.translation),
        }
    }

    /// `R·p + t`.
    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// `R·v`, for directions and velocities.
    pub fn rotate_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    /// Heading of the body x-axis projected onto the world xy-plane.
    pub fn yaw(&self) -> f64 {
        yaw_of(&self.rotation)
    }
}

/// Heading of a rotation's x-axis projected onto the xy-plane.
pub fn yaw_of(q: &UnitQuaternion<f64>) -> f64 {
    let x_axis = q * Vector3::x();
    x_axis.y.atan2(x_axis.x)
}

/// Roll/pitch part of an attitude: the rotation left after removing heading,
/// i.e. `R_z(-yaw) * q`.
pub fn tilt_of(q: &UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let yaw = yaw_of(q);
    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), -yaw) * q
}
