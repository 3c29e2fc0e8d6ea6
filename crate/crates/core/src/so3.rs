//! Rotation primitives on SO(3) and the unit quaternions.
//!
//! Conventions used throughout the crate:
//!
//! - Quaternions are scalar-first `[w, x, y, z]` with the Hamilton product.
//! - A rotation `R` maps body-frame vectors to the inertial frame, so a known
//!   inertial direction `a` is observed on board as `Rᵀa`.
//! - Body angular rate `Ω` drives `Ṙ = R Ω^×` and `q̇ = M(Ω) q`, where
//!   `M(Ω)` already contains the factor one half.
//!
//! Quaternion signs are canonicalized (`w ≥ 0`) only in [`rot_to_quat`].
//! Everything else preserves the sign it was handed.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use std::ops::Mul;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Vec4 = Vector4<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Mat4 = Matrix4<f64>;

/// Below this angle the Rodrigues coefficients switch to their Taylor series.
pub const SMALL_ANGLE: f64 = 1e-8;

const SKEW_TOLERANCE: f64 = 1e-9;
const MIN_QUATERNION_NORM: f64 = 1e-9;

/// `hat(v) u = v × u`.
pub fn hat(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`]. Rejects matrices whose asymmetry exceeds 1e-9.
pub fn vee(m: &Mat3) -> Result<Vec3> {
    let asymmetry = (m + m.transpose()).amax();
    if asymmetry > SKEW_TOLERANCE {
        return Err(Error::NotSkewSymmetric { asymmetry });
    }
    Ok(Vec3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    ))
}

/// Matrix exponential of `hat(v)` by the Rodrigues formula.
pub fn exp_so3(v: &Vec3) -> Mat3 {
    let theta = v.norm();
    let k = hat(v);
    let k2 = k * k;
    if theta < SMALL_ANGLE {
        return Mat3::identity() + k + 0.5 * k2;
    }
    let half = 0.5 * theta;
    let a = theta.sin() / theta;
    // 1 - cos θ written as 2 sin²(θ/2) to avoid cancellation.
    let b = 2.0 * (half.sin() / theta).powi(2);
    Mat3::identity() + a * k + b * k2
}

/// Rotation by `angle` radians about `axis` (normalized internally).
pub fn rod(angle: f64, axis: &Vec3) -> Result<Mat3> {
    if angle == 0.0 {
        return Ok(Mat3::identity());
    }
    let n = axis.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroAxis { angle });
    }
    Ok(exp_so3(&(axis * (angle / n))))
}

/// Rotation encoded by `q`, evaluated through its axis-angle pair.
///
/// Agrees with [`quat_to_rot`]; `rod_q(q) == rod_q(-q)`.
pub fn rod_q(q: &UnitQuaternion) -> Mat3 {
    let s = q.v.norm();
    if s == 0.0 {
        return Mat3::identity();
    }
    let angle = 2.0 * s.atan2(q.w);
    exp_so3(&(q.v * (angle / s)))
}

/// Unit quaternion, scalar first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion {
    w: f64,
    v: Vec3,
}

impl UnitQuaternion {
    pub fn identity() -> Self {
        Self {
            w: 1.0,
            v: Vec3::zeros(),
        }
    }

    /// Normalizes `[w, x, y, z]`.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        quat_normalize(&Vec4::new(w, x, y, z))
    }

    /// Rotation of `angle` about `axis`; the axis is normalized internally.
    pub fn from_axis_angle(angle: f64, axis: &Vec3) -> Result<Self> {
        if angle == 0.0 {
            return Ok(Self::identity());
        }
        let n = axis.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroAxis { angle });
        }
        Ok(Self::exp(&(axis * (angle / n))))
    }

    /// Quaternion of the rotation vector `phi` (angle |phi| about phi/|phi|).
    pub fn exp(phi: &Vec3) -> Self {
        let half = 0.5 * phi.norm();
        let sinc = if half < SMALL_ANGLE {
            1.0 - half * half / 6.0
        } else {
            half.sin() / half
        };
        Self {
            w: half.cos(),
            v: phi * (0.5 * sinc),
        }
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn vector(&self) -> Vec3 {
        self.v
    }

    pub fn to_vec4(&self) -> Vec4 {
        Vec4::new(self.w, self.v.x, self.v.y, self.v.z)
    }

    pub fn conjugate(&self) -> Self {
        Self {
            w: self.w,
            v: -self.v,
        }
    }

    pub fn neg(&self) -> Self {
        Self {
            w: -self.w,
            v: -self.v,
        }
    }

    pub fn norm(&self) -> f64 {
        self.to_vec4().norm()
    }

    pub fn to_rotation(&self) -> Mat3 {
        quat_to_rot(self)
    }
}

impl Mul for UnitQuaternion {
    type Output = UnitQuaternion;

    fn mul(self, rhs: UnitQuaternion) -> UnitQuaternion {
        quat_multiply(&self, &rhs)
    }
}

/// Hamilton product `q1 ⊗ q2`.
pub fn quat_multiply(q1: &UnitQuaternion, q2: &UnitQuaternion) -> UnitQuaternion {
    let p = hamilton(&q1.to_vec4(), &q2.to_vec4());
    UnitQuaternion {
        w: p[0],
        v: Vec3::new(p[1], p[2], p[3]),
    }
}

/// Hamilton product on raw 4-vectors.
pub fn hamilton(a: &Vec4, b: &Vec4) -> Vec4 {
    let (aw, ax, ay, az) = (a[0], a[1], a[2], a[3]);
    let (bw, bx, by, bz) = (b[0], b[1], b[2], b[3]);
    Vec4::new(
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )
}

/// `x ↦ a ⊗ x` as a 4×4 matrix.
pub fn left_product_matrix(a: &Vec4) -> Mat4 {
    let (w, x, y, z) = (a[0], a[1], a[2], a[3]);
    Mat4::new(
        w, -x, -y, -z, //
        x, w, -z, y, //
        y, z, w, -x, //
        z, -y, x, w,
    )
}

/// `x ↦ x ⊗ b` as a 4×4 matrix.
pub fn right_product_matrix(b: &Vec4) -> Mat4 {
    let (w, x, y, z) = (b[0], b[1], b[2], b[3]);
    Mat4::new(
        w, -x, -y, -z, //
        x, w, z, -y, //
        y, -z, w, x, //
        z, y, -x, w,
    )
}

pub fn quat_normalize(q: &Vec4) -> Result<UnitQuaternion> {
    let norm = q.norm();
    if !(norm >= MIN_QUATERNION_NORM) || !norm.is_finite() {
        return Err(Error::DegenerateQuaternion { norm });
    }
    let u = q / norm;
    Ok(UnitQuaternion {
        w: u[0],
        v: Vec3::new(u[1], u[2], u[3]),
    })
}

pub fn quat_to_rot(q: &UnitQuaternion) -> Mat3 {
    rotation_from_raw(&q.to_vec4())
}

/// Homogeneous quadratic rotation formula `(w² − |v|²) I + 2 v vᵀ + 2 w v^×`.
///
/// Equals the rotation of `q/|q|` scaled by `|q|²`; filters that carry an
/// unnormalized quaternion differentiate through this form.
pub fn rotation_from_raw(q: &Vec4) -> Mat3 {
    let w = q[0];
    let v = Vec3::new(q[1], q[2], q[3]);
    Mat3::identity() * (w * w - v.dot(&v)) + 2.0 * v * v.transpose() + 2.0 * w * hat(&v)
}

/// Shepperd's method, canonicalized to `w ≥ 0`.
pub fn rot_to_quat(r: &Mat3) -> UnitQuaternion {
    let trace = r.trace();
    let candidates = [trace, r[(0, 0)], r[(1, 1)], r[(2, 2)]];
    let (pick, _) = candidates
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &c)| {
            if c > best.1 {
                (i, c)
            } else {
                best
            }
        });
    let q = match pick {
        0 => {
            let s = 2.0 * (1.0 + trace).sqrt();
            Vec4::new(
                0.25 * s,
                (r[(2, 1)] - r[(1, 2)]) / s,
                (r[(0, 2)] - r[(2, 0)]) / s,
                (r[(1, 0)] - r[(0, 1)]) / s,
            )
        }
        1 => {
            let s = 2.0 * (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt();
            Vec4::new(
                (r[(2, 1)] - r[(1, 2)]) / s,
                0.25 * s,
                (r[(0, 1)] + r[(1, 0)]) / s,
                (r[(0, 2)] + r[(2, 0)]) / s,
            )
        }
        2 => {
            let s = 2.0 * (1.0 - r[(0, 0)] + r[(1, 1)] - r[(2, 2)]).sqrt();
            Vec4::new(
                (r[(0, 2)] - r[(2, 0)]) / s,
                (r[(0, 1)] + r[(1, 0)]) / s,
                0.25 * s,
                (r[(1, 2)] + r[(2, 1)]) / s,
            )
        }
        _ => {
            let s = 2.0 * (1.0 - r[(0, 0)] - r[(1, 1)] + r[(2, 2)]).sqrt();
            Vec4::new(
                (r[(1, 0)] - r[(0, 1)]) / s,
                (r[(0, 2)] + r[(2, 0)]) / s,
                (r[(1, 2)] + r[(2, 1)]) / s,
                0.25 * s,
            )
        }
    };
    let q = if q[0] < 0.0 { -q } else { q };
    let q = q / q.norm();
    UnitQuaternion {
        w: q[0],
        v: Vec3::new(q[1], q[2], q[3]),
    }
}

/// `M(Ω) = ½ [[0, −Ωᵀ], [Ω, −Ω^×]]`, so that `q̇ = M(Ω) q`.
pub fn omega_matrix(omega: &Vec3) -> Mat4 {
    let (x, y, z) = (omega.x, omega.y, omega.z);
    0.5 * Mat4::new(
        0.0, -x, -y, -z, //
        x, 0.0, z, -y, //
        y, -z, 0.0, x, //
        z, y, -x, 0.0,
    )
}

/// Largest elementwise deviation of `RᵀR` from the identity.
pub fn orthogonality_error(r: &Mat3) -> f64 {
    (r.transpose() * r - Mat3::identity()).amax()
}

pub fn is_rotation(r: &Mat3, tol: f64) -> bool {
    orthogonality_error(r) <= tol && (r.determinant() - 1.0).abs() <= tol
}
