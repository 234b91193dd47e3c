//! Unit-quaternion algebra and the attitude error metric.
//!
//! Conventions used throughout the crate:
//!
//! * Hamilton product, scalar-first components `[w, x, y, z]`.
//! * A quaternion `q` maps sensor coordinates to earth coordinates,
//!   `v_E = q ⊗ v_S ⊗ q⁻¹`. The earth z-axis points up.
//! * Angular rates are expressed in the sensor frame, so kinematics read
//!   `q̇ = ½ q ⊗ (0, ω)`.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Three-dimensional vector. Units depend on context (rad/s, m/s², unitless).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const E_X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const E_Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    /// Earth vertical axis.
    pub const E_Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, rhs: Vec3) -> f64 {
        self.x * rhs.x + self.y * rhs.y + self.z * rhs.z
    }

    pub fn cross(self, rhs: Vec3) -> Vec3 {
        Vec3::new(
            self.y * rhs.z - self.z * rhs.y,
            self.z * rhs.x - self.x * rhs.z,
            self.x * rhs.y - self.y * rhs.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Unit vector in the same direction, or `None` when the norm is below `eps`.
    pub fn normalized(self, eps: f64) -> Option<Vec3> {
        let n = self.norm();
        (n > eps).then(|| self * (1.0 / n))
    }

    /// Angle between two non-zero vectors, computed with `atan2` so it stays
    /// accurate for nearly parallel vectors.
    pub fn angle_to(self, rhs: Vec3) -> f64 {
        self.cross(rhs).norm().atan2(self.dot(rhs))
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, rhs: Vec3) {
        *self = *self + rhs;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

/// Quaternion `[w, x, y, z]`. Orientation quaternions are unit length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion::new(1.0, 0.0, 0.0, 0.0);

    /// Raw constructor; does not normalize.
    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn vector(self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(self, rhs: Quaternion) -> f64 {
        self.w * rhs.w + self.x * rhs.x + self.y * rhs.y + self.z * rhs.z
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    fn scale(self, k: f64) -> Quaternion {
        Quaternion::new(self.w * k, self.x * k, self.y * k, self.z * k)
    }

    /// Scales to unit length. Fails for zero or non-finite input.
    pub fn try_normalized(self) -> Result<Quaternion> {
        let n = self.norm();
        if !n.is_finite() || n < 1e-300 {
            return Err(invalid(format!("cannot normalize quaternion {self:?}")));
        }
        Ok(self.scale(1.0 / n))
    }

    /// Like [`Quaternion::try_normalized`] for inputs already known to be
    /// close to unit length.
    pub fn normalized(self) -> Quaternion {
        self.scale(1.0 / self.norm())
    }

    /// Conjugate, which is the inverse for unit quaternions.
    pub fn inverse(self) -> Quaternion {
        Quaternion::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Hamilton product without renormalization.
    pub fn hamilton(self, b: Quaternion) -> Quaternion {
        let a = self;
        Quaternion::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }

    /// Renormalized Hamilton product that rejects non-finite input.
    pub fn checked_mul(self, rhs: Quaternion) -> Result<Quaternion> {
        if !self.is_finite() || !rhs.is_finite() {
            return Err(invalid("non-finite quaternion in product"));
        }
        self.hamilton(rhs).try_normalized()
    }

    /// `q ⊗ (0, v) ⊗ q⁻¹`.
    pub fn rotate(self, v: Vec3) -> Vec3 {
        // v + 2w(u × v) + 2u × (u × v)
        let u = self.vector();
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Rotation of `angle` radians about `axis`. A zero axis is only accepted
    /// together with a zero angle.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Result<Quaternion> {
        if !axis.is_finite() || !angle.is_finite() {
            return Err(invalid("non-finite axis or angle"));
        }
        let n = axis.norm();
        if n == 0.0 {
            if angle == 0.0 {
                return Ok(Quaternion::IDENTITY);
            }
            return Err(invalid("zero rotation axis with non-zero angle"));
        }
        let (s, c) = (angle / 2.0).sin_cos();
        let u = axis * (s / n);
        Ok(Quaternion::new(c, u.x, u.y, u.z))
    }

    /// Exponential map of a rotation vector (axis times angle).
    pub fn from_rotation_vector(rv: Vec3) -> Quaternion {
        let theta = rv.norm();
        // sin(θ/2)/θ, with its Taylor series near zero
        let k = if theta < 1e-6 {
            0.5 - theta * theta / 48.0
        } else {
            (theta / 2.0).sin() / theta
        };
        Quaternion::new((theta / 2.0).cos(), rv.x * k, rv.y * k, rv.z * k)
    }

    /// Pure rotation about the earth vertical.
    pub fn about_z(angle: f64) -> Quaternion {
        let (s, c) = (angle / 2.0).sin_cos();
        Quaternion::new(c, 0.0, 0.0, s)
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(self) -> f64 {
        2.0 * self.vector().norm().atan2(self.w.abs())
    }

    /// Representative with `w >= 0`.
    pub fn canonical(self) -> Quaternion {
        if self.w < 0.0 {
            self.scale(-1.0)
        } else {
            self
        }
    }

    /// Rotation angle between two orientations, ignoring the sign ambiguity.
    pub fn angle_between(self, other: Quaternion) -> f64 {
        self.inverse().hamilton(other).angle()
    }
}

/// Renormalized Hamilton product.
impl Mul for Quaternion {
    type Output = Quaternion;
    fn mul(self, rhs: Quaternion) -> Quaternion {
        self.hamilton(rhs).normalized()
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Quaternion {
        self.scale(-1.0)
    }
}

pub fn multiply(a: Quaternion, b: Quaternion) -> Result<Quaternion> {
    a.checked_mul(b)
}

pub fn inverse(q: Quaternion) -> Quaternion {
    q.inverse()
}

pub fn rotate_vec(q: Quaternion, v: Vec3) -> Vec3 {
    q.rotate(v)
}

pub fn from_axis_angle(axis: Vec3, angle: f64) -> Result<Quaternion> {
    Quaternion::from_axis_angle(axis, angle)
}

/// One strapdown step: `q ⊗ exp(ω dt / 2)`, exact for a rate that is constant
/// over the step.
pub fn integrate_gyro(q: Quaternion, omega: Vec3, dt: f64) -> Result<Quaternion> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(invalid(format!("time step must be positive, got {dt}")));
    }
    Ok(integrate_unchecked(q, omega, dt))
}

pub(crate) fn integrate_unchecked(q: Quaternion, omega: Vec3, dt: f64) -> Quaternion {
    q * Quaternion::from_rotation_vector(omega * dt)
}

/// Attitude (inclination) error in radians between a true and an estimated
/// orientation.
///
/// The error quaternion `q_true ⊗ q_est⁻¹` lives in earth coordinates; its
/// rotation about the vertical is heading and is ignored. What remains is
/// `2 acos √(w² + z²)`, the angle between the true and the estimated
/// vertical axis seen from the sensor.
pub fn attitude_error(q_true: Quaternion, q_est: Quaternion) -> f64 {
    let e = q_true.hamilton(q_est.inverse());
    let s = (e.w * e.w + e.z * e.z) / e.dot(e);
    2.0 * s.sqrt().clamp(0.0, 1.0).acos()
}

/// Heading part of the error metric, in `[0, π]`.
pub fn heading_error(q_true: Quaternion, q_est: Quaternion) -> f64 {
    let (head, _) = decompose_error(q_true.hamilton(q_est.inverse()).normalized());
    head.angle()
}

/// Splits an earth-frame error quaternion into `q_head ⊗ q_att`, where `q_head`
/// rotates about the vertical and `q_att` about a horizontal axis with the
/// smallest possible angle.
///
/// When `w = z = 0` (a half turn about a horizontal axis) heading is undefined;
/// `q_head` is then the identity and `q_att = q_err`.
pub fn decompose_error(q_err: Quaternion) -> (Quaternion, Quaternion) {
    let n = (q_err.w * q_err.w + q_err.z * q_err.z).sqrt();
    if n < 1e-15 {
        return (Quaternion::IDENTITY, q_err);
    }
    let (c, s) = (q_err.w / n, q_err.z / n);
    let head = Quaternion::new(c, 0.0, 0.0, s);
    // head⁻¹ ⊗ q_err, written out: the z component vanishes identically
    let att = Quaternion::new(
        n,
        c * q_err.x + s * q_err.y,
        c * q_err.y - s * q_err.x,
        0.0,
    );
    (head, att)
}

/// Spherical linear interpolation along the shorter arc.
pub fn slerp(a: Quaternion, b: Quaternion, t: f64) -> Quaternion {
    let mut d = a.dot(b);
    let b = if d < 0.0 {
        d = -d;
        -b
    } else {
        b
    };
    if d > 1.0 - 1e-10 {
        let q = Quaternion::new(
            a.w + t * (b.w - a.w),
            a.x + t * (b.x - a.x),
            a.y + t * (b.y - a.y),
            a.z + t * (b.z - a.z),
        );
        return q.normalized();
    }
    let theta = d.min(1.0).acos();
    let sin_theta = theta.sin();
    let ka = ((1.0 - t) * theta).sin() / sin_theta;
    let kb = (t * theta).sin() / sin_theta;
    Quaternion::new(
        ka * a.w + kb * b.w,
        ka * a.x + kb * b.x,
        ka * a.y + kb * b.y,
        ka * a.z + kb * b.z,
    )
    .normalized()
}

pub fn rad_to_deg(x: f64) -> f64 {
    x * 180.0 / PI
}

pub fn deg_to_rad(x: f64) -> f64 {
    x * PI / 180.0
}
