//! Rigid-body groups SO(3), SE(3) and SE(2).
//!
//! Tangent vectors are ordered translation first, then rotation: an se(3)
//! twist is `(vx, vy, vz, wx, wy, wz)` and an se(2) twist is `(vx, vy, w)`.
//!
//! All perturbations are right-multiplicative: `t ⊕ δ = t ∘ exp(δ)`. The
//! solver, the kinematic Jacobians and the pose residual all use this one
//! convention.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Mul;

use nalgebra::{
    Matrix3, Matrix6, Quaternion, Rotation2, UnitQuaternion, Vector2, Vector3, Vector6,
};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Below this angle (radians) exp/log/V-matrix use their Taylor series.
pub const SMALL_ANGLE: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LieError {
    #[error("tangent dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("interpolation parameter {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
}

/// Skew-symmetric matrix with `hat(a) * b == a.cross(b)`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation stored as a unit quaternion with non-negative scalar part.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation3(UnitQuaternion<f64>);

impl Rotation3 {
    pub fn identity() -> Self {
        Rotation3(UnitQuaternion::identity())
    }

    /// Builds from `(w, x, y, z)`; the quaternion is normalized and put in
    /// canonical sign.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self::canonical(UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)))
    }

    pub fn from_unit_quaternion(q: UnitQuaternion<f64>) -> Self {
        Self::canonical(q)
    }

    /// URDF convention: fixed-axis roll, pitch, yaw (`Rz(yaw) Ry(pitch) Rx(roll)`).
    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::canonical(UnitQuaternion::from_euler_angles(roll, pitch, yaw))
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        so3_exp(&(axis * (angle / n)))
    }

    fn canonical(q: UnitQuaternion<f64>) -> Self {
        // Renormalize once drift is measurable; long composition chains
        // otherwise wander off the unit sphere.
        let mut raw = q.into_inner();
        if raw.w < 0.0 {
            raw = -raw;
        }
        if (raw.norm_squared() - 1.0).abs() > 4.0 * f64::EPSILON {
            raw = raw.normalize();
        }
        Rotation3(UnitQuaternion::new_unchecked(raw))
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.0.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.0.to_rotation_matrix().into_inner()
    }

    pub fn inverse(&self) -> Self {
        Self::canonical(self.0.inverse())
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Geodesic angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        so3_log(self).norm()
    }

    pub fn log(&self) -> Vector3<f64> {
        so3_log(self)
    }

    pub fn local_update(&self, delta: &Vector3<f64>) -> Self {
        *self * so3_exp(delta)
    }
}

impl Mul for Rotation3 {
    type Output = Rotation3;
    fn mul(self, rhs: Rotation3) -> Rotation3 {
        Rotation3::canonical(self.0 * rhs.0)
    }
}

pub fn so3_exp(omega: &Vector3<f64>) -> Rotation3 {
    let theta2 = omega.norm_squared();
    let theta = theta2.sqrt();
    let (w, k) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 8.0, 0.5 - theta2 / 48.0)
    } else {
        let half = 0.5 * theta;
        (half.cos(), half.sin() / theta)
    };
    Rotation3::canonical(UnitQuaternion::from_quaternion(Quaternion::new(
        w,
        k * omega.x,
        k * omega.y,
        k * omega.z,
    )))
}

/// Rotation vector of `r`, norm in `[0, π]`. At exactly π the sign is
/// chosen so the largest-magnitude axis component is positive.
pub fn so3_log(r: &Rotation3) -> Vector3<f64> {
    let q = r.0.quaternion();
    let w = q.w;
    let mut v = Vector3::new(q.i, q.j, q.k);
    let vn = v.norm();
    if vn < SMALL_ANGLE * 0.5 {
        // theta ≈ 2 |v| / w
        return v * (2.0 / w) * (1.0 - vn * vn / (3.0 * w * w));
    }
    if w == 0.0 {
        let imax = v.iamax();
        if v[imax] < 0.0 {
            v = -v;
        }
    }
    let theta = 2.0 * vn.atan2(w);
    v * (theta / vn)
}

/// Coefficients `(a, b)` of `V = I + a·W + b·W²` for `W = hat(ω)`, `θ = |ω|`.
fn v_coefficients(theta: f64) -> (f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        let t2 = theta * theta;
        let half_sin = (0.5 * theta).sin();
        ((2.0 * half_sin * half_sin) / t2, (theta - theta.sin()) / (t2 * theta))
    }
}

/// `V(ω)`, the left Jacobian of SO(3); couples rotation into translation in
/// the SE(3) exponential.
pub fn so3_left_jacobian(omega: &Vector3<f64>) -> Matrix3<f64> {
    let w = hat(omega);
    let (a, b) = v_coefficients(omega.norm());
    Matrix3::identity() + w * a + w * w * b
}

pub fn so3_left_jacobian_inverse(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta = omega.norm();
    let w = hat(omega);
    let c = if theta < SMALL_ANGLE {
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        let half = 0.5 * theta;
        (1.0 - half * half.cos() / half.sin()) / (theta * theta)
    };
    Matrix3::identity() - w * 0.5 + w * w * c
}

/// Rigid transform: rotation followed by translation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transform3 {
    pub rotation: Rotation3,
    pub translation: Vector3<f64>,
}

/// se(3) tangent vector, translation part first.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Twist(pub Vector6<f64>);

impl Twist {
    pub fn new(v: Vector3<f64>, omega: Vector3<f64>) -> Self {
        Twist(Vector6::new(v.x, v.y, v.z, omega.x, omega.y, omega.z))
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(0).into_owned()
    }

    pub fn rotation(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(3).into_owned()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

impl Transform3 {
    pub fn identity() -> Self {
        Transform3 {
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Rotation3, translation: Vector3<f64>) -> Self {
        Transform3 {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Transform3 {
            rotation: Rotation3::identity(),
            translation,
        }
    }

    pub fn from_rotation(rotation: Rotation3) -> Self {
        Transform3 {
            rotation,
            translation: Vector3::zeros(),
        }
    }

    pub fn compose(&self, other: &Transform3) -> Transform3 {
        Transform3 {
            rotation: self.rotation * other.rotation,
            translation: self.translation + self.rotation.rotate(&other.translation),
        }
    }

    pub fn inverse(&self) -> Transform3 {
        let rinv = self.rotation.inverse();
        Transform3 {
            rotation: rinv,
            translation: -rinv.rotate(&self.translation),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.rotate(p) + self.translation
    }

    pub fn log(&self) -> Twist {
        se3_log(self)
    }

    pub fn local_update(&self, delta: &Twist) -> Transform3 {
        self.compose(&se3_exp(delta))
    }

    /// 6×6 adjoint acting on `(v, ω)` twists: `Ad(T) ξ = (T ξ^ T⁻¹)^∨`.
    pub fn adjoint(&self) -> Matrix6<f64> {
        let r = self.rotation.matrix();
        let mut ad = Matrix6::zeros();
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        ad.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
        ad.fixed_view_mut::<3, 3>(0, 3)
            .copy_from(&(hat(&self.translation) * r));
        ad
    }
}

impl Mul for Transform3 {
    type Output = Transform3;
    fn mul(self, rhs: Transform3) -> Transform3 {
        self.compose(&rhs)
    }
}

impl fmt::Display for Transform3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [w, x, y, z] = self.rotation.wxyz();
        let p = self.translation;
        write!(
            f,
            "Transform3(wxyz: [{w:.4}, {x:.4}, {y:.4}, {z:.4}], pos: [{:.4}, {:.4}, {:.4}])",
            p.x, p.y, p.z
        )
    }
}

pub fn se3_exp(xi: &Twist) -> Transform3 {
    let omega = xi.rotation();
    let v = so3_left_jacobian(&omega) * xi.translation();
    Transform3 {
        rotation: so3_exp(&omega),
        translation: v,
    }
}

pub fn se3_log(t: &Transform3) -> Twist {
    let omega = so3_log(&t.rotation);
    let v = so3_left_jacobian_inverse(&omega) * t.translation;
    Twist::new(v, omega)
}

/// Inverse of the SE(3) right Jacobian at `xi`.
///
/// For `E ⊕ δ = E ∘ exp(δ)`, `log(E ⊕ δ) ≈ log(E) + Jr⁻¹(log E) δ`.
pub fn se3_right_jacobian_inverse(xi: &Twist) -> Matrix6<f64> {
    // Jr(ξ) = Jl(−ξ); blocks [[J, Q], [0, J]] in (v, ω) order.
    let rho = -xi.translation();
    let phi = -xi.rotation();
    let jinv = so3_left_jacobian_inverse(&phi);
    let q = se3_q_matrix(&rho, &phi);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&jinv);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&jinv);
    out.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(-jinv * q * jinv));
    out
}

/// Off-diagonal block of the SE(3) left Jacobian (Barfoot's Q).
fn se3_q_matrix(rho: &Vector3<f64>, phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let px = hat(phi);
    let rx = hat(rho);
    let t2 = theta * theta;
    // The closed-form coefficients cancel badly for small angles, so the
    // series is used well above SMALL_ANGLE.
    let (c1, c2, c3) = if theta < 1e-2 {
        (
            1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0,
            -1.0 / 24.0 + t2 / 720.0 - t2 * t2 / 40320.0,
            -1.0 / 60.0 + t2 / 1260.0,
        )
    } else {
        let (s, c) = theta.sin_cos();
        let t3 = t2 * theta;
        let t4 = t2 * t2;
        let t5 = t4 * theta;
        let c1 = (theta - s) / t3;
        let c2 = (1.0 - 0.5 * t2 - c) / t4;
        let c3 = c2 - 3.0 * (theta - s - t3 / 6.0) / t5;
        (c1, c2, c3)
    };
    let pr = px * rx;
    let rp = rx * px;
    let prp = pr * px;
    rx * 0.5 + (pr + rp + prp) * c1 - (px * pr + rp * px - prp * 3.0) * c2
        - (prp * px + px * prp) * (0.5 * c3)
}

/// Geodesic interpolation `a ∘ exp(α · log(a⁻¹ ∘ b))`.
pub fn interpolate(a: &Transform3, b: &Transform3, alpha: f64) -> Result<Transform3, LieError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(LieError::AlphaOutOfRange(alpha));
    }
    let delta = se3_log(&a.inverse().compose(b));
    Ok(a.compose(&se3_exp(&Twist(delta.0 * alpha))))
}

/// Planar rigid transform; angle kept in `(−π, π]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transform2 {
    angle: f64,
    pub translation: Vector2<f64>,
}

pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

impl Transform2 {
    pub fn identity() -> Self {
        Transform2 {
            angle: 0.0,
            translation: Vector2::zeros(),
        }
    }

    pub fn new(angle: f64, translation: Vector2<f64>) -> Self {
        Transform2 {
            angle: wrap_angle(angle),
            translation,
        }
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn compose(&self, other: &Transform2) -> Transform2 {
        let r = Rotation2::new(self.angle);
        Transform2::new(self.angle + other.angle, self.translation + r * other.translation)
    }

    pub fn inverse(&self) -> Transform2 {
        let rinv = Rotation2::new(-self.angle);
        Transform2::new(-self.angle, -(rinv * self.translation))
    }

    pub fn apply(&self, p: &Vector2<f64>) -> Vector2<f64> {
        Rotation2::new(self.angle) * p + self.translation
    }

    /// Lift into SE(3) on the `z = 0` plane, rotating about `z`.
    pub fn to_transform3(&self) -> Transform3 {
        Transform3 {
            rotation: Rotation3::from_axis_angle(&Vector3::z(), self.angle),
            translation: Vector3::new(self.translation.x, self.translation.y, 0.0),
        }
    }

    pub fn local_update(&self, delta: &nalgebra::Vector3<f64>) -> Transform2 {
        self.compose(&se2_exp(delta))
    }

    pub fn log(&self) -> nalgebra::Vector3<f64> {
        se2_log(self)
    }
}

fn se2_v_coefficients(theta: f64) -> (f64, f64) {
    // V = [[a, -b], [b, a]] with a = sinθ/θ, b = (1 - cosθ)/θ
    if theta.abs() < SMALL_ANGLE {
        (1.0 - theta * theta / 6.0, 0.5 * theta)
    } else {
        let half_sin = (0.5 * theta).sin();
        (theta.sin() / theta, 2.0 * half_sin * half_sin / theta)
    }
}

/// `delta = (vx, vy, ω)`.
pub fn se2_exp(delta: &nalgebra::Vector3<f64>) -> Transform2 {
    let (a, b) = se2_v_coefficients(delta.z);
    let t = Vector2::new(a * delta.x - b * delta.y, b * delta.x + a * delta.y);
    Transform2::new(delta.z, t)
}

pub fn se2_log(t: &Transform2) -> nalgebra::Vector3<f64> {
    let theta = t.angle;
    let (a, b) = se2_v_coefficients(theta);
    let det = a * a + b * b;
    let p = t.translation;
    nalgebra::Vector3::new((a * p.x + b * p.y) / det, (-b * p.x + a * p.y) / det, theta)
}

/// Right-multiplicative retraction over a flat tangent slice.
pub trait LocalUpdate: Sized {
    const TANGENT_DIM: usize;
    fn local_update_slice(&self, delta: &[f64]) -> Result<Self, LieError>;
}

fn check_dim(expected: usize, delta: &[f64]) -> Result<(), LieError> {
    if delta.len() != expected {
        return Err(LieError::DimensionMismatch {
            expected,
            actual: delta.len(),
        });
    }
    Ok(())
}

impl LocalUpdate for Transform3 {
    const TANGENT_DIM: usize = 6;
    fn local_update_slice(&self, delta: &[f64]) -> Result<Self, LieError> {
        check_dim(6, delta)?;
        Ok(self.local_update(&Twist(Vector6::from_column_slice(delta))))
    }
}

impl LocalUpdate for Transform2 {
    const TANGENT_DIM: usize = 3;
    fn local_update_slice(&self, delta: &[f64]) -> Result<Self, LieError> {
        check_dim(3, delta)?;
        Ok(self.local_update(&nalgebra::Vector3::from_column_slice(delta)))
    }
}

impl LocalUpdate for Rotation3 {
    const TANGENT_DIM: usize = 3;
    fn local_update_slice(&self, delta: &[f64]) -> Result<Self, LieError> {
        check_dim(3, delta)?;
        Ok(self.local_update(&Vector3::from_column_slice(delta)))
    }
}

#[derive(Serialize, Deserialize)]
struct Transform3Json {
    wxyz: [f64; 4],
    pos: [f64; 3],
}

impl Serialize for Transform3 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let p = self.translation;
        Transform3Json {
            wxyz: self.rotation.wxyz(),
            pos: [p.x, p.y, p.z],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Transform3 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = Transform3Json::deserialize(d)?;
        let [w, x, y, z] = raw.wxyz;
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(serde::de::Error::custom("wxyz must be a non-zero quaternion"));
        }
        Ok(Transform3 {
            rotation: Rotation3::from_wxyz(w, x, y, z),
            translation: Vector3::from(raw.pos),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Transform2Json {
    angle: f64,
    pos: [f64; 2],
}

impl Serialize for Transform2 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        Transform2Json {
            angle: self.angle,
            pos: [self.translation.x, self.translation.y],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Transform2 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = Transform2Json::deserialize(d)?;
        Ok(Transform2::new(raw.angle, Vector2::from(raw.pos)))
    }
}
