//! Lie-group integration of rigid-body attitude and rate.
//!
//! Orientation advances by right multiplication with the exponential of the
//! current body rate. The rate advances through the implicit momentum
//! equation
//!
//! ```text
//! C(−hΩ₊) 𝕀 Ω₊ = C(hΩ) 𝕀 Ω + h U,     C(x) = I − ½ x^× + (1/12) (x^×)²
//! ```
//!
//! solved by Newton's method with an analytic Jacobian. `U` is the total
//! generalized torque for the step (applied torque plus any disturbance the
//! caller folds in).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::so3::{exp_so3, hamilton, hat, Mat3, UnitQuaternion, Vec3, Vec4};

const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Symmetric positive-definite inertia tensor in kg·m².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertiaTensor {
    matrix: Mat3,
    inverse: Mat3,
}

impl InertiaTensor {
    pub fn new(matrix: Mat3) -> Result<Self> {
        if !matrix.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidConfig(
                "inertia has non-finite entries".into(),
            ));
        }
        if (matrix - matrix.transpose()).amax() > SYMMETRY_TOLERANCE {
            return Err(Error::InvalidConfig("inertia is not symmetric".into()));
        }
        let min_eig = matrix.symmetric_eigenvalues().min();
        if min_eig <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "inertia is not positive definite (smallest eigenvalue {min_eig})"
            )));
        }
        let inverse = matrix
            .try_inverse()
            .ok_or_else(|| Error::InvalidConfig("inertia is singular".into()))?;
        Ok(Self { matrix, inverse })
    }

    pub fn diagonal(ixx: f64, iyy: f64, izz: f64) -> Result<Self> {
        Self::new(Mat3::from_diagonal(&Vec3::new(ixx, iyy, izz)))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.matrix
    }

    pub fn inverse(&self) -> &Mat3 {
        &self.inverse
    }

    pub fn kinetic_energy(&self, omega: &Vec3) -> f64 {
        0.5 * omega.dot(&(self.matrix * omega))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonSolverConfig {
    /// Convergence threshold on the residual ∞-norm (N·m·s).
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for NewtonSolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_iterations: 50,
        }
    }
}

impl NewtonSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::InvalidConfig(
                "Newton tolerance must be positive and max_iterations at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Orientation and body angular rate (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyState {
    pub attitude: UnitQuaternion,
    pub omega: Vec3,
}

impl RigidBodyState {
    pub fn rotation(&self) -> Mat3 {
        self.attitude.to_rotation()
    }

    /// Angular momentum expressed in the inertial frame.
    pub fn spatial_momentum(&self, inertia: &InertiaTensor) -> Vec3 {
        self.rotation() * (inertia.matrix() * self.omega)
    }
}

pub fn c_exp(x: &Vec3) -> Mat3 {
    let k = hat(x);
    Mat3::identity() - 0.5 * k + (k * k) / 12.0
}

/// Derivative of `x ↦ C(s·x) 𝕀 x`.
pub fn c_exp_momentum_jacobian(x: &Vec3, inertia: &Mat3, s: f64) -> Mat3 {
    let m = inertia * x;
    let hx = hat(x);
    let hm = hat(&m);
    // C(s x) m = m − (s/2) x×m + (s²/12) x×(x×m)
    inertia - 0.5 * s * (hx * inertia - hm)
        + (s * s / 12.0) * (-hat(&x.cross(&m)) - hx * hm + hx * hx * inertia)
}

/// Gyroscopic rigid-body acceleration `𝕀⁻¹((𝕀Ω)^×Ω + T)`.
pub fn rigid_body_acceleration(omega: &Vec3, torque: &Vec3, inertia: &InertiaTensor) -> Vec3 {
    inertia.inverse() * ((inertia.matrix() * omega).cross(omega) + torque)
}

/// Advances the body rate by one step under generalized torque `u`.
///
/// A negative `h` runs the scheme backwards: `step_rate(step_rate(Ω, U, h), U, −h) = Ω`.
pub fn step_rate(
    omega: &Vec3,
    u: &Vec3,
    inertia: &InertiaTensor,
    h: f64,
    cfg: &NewtonSolverConfig,
) -> Result<Vec3> {
    solve_rate(omega, u, inertia, h, cfg, None)
}

/// As [`step_rate`], also returning the residual norm after each Newton update.
pub fn step_rate_traced(
    omega: &Vec3,
    u: &Vec3,
    inertia: &InertiaTensor,
    h: f64,
    cfg: &NewtonSolverConfig,
) -> Result<(Vec3, Vec<f64>)> {
    let mut trace = Vec::new();
    let x = solve_rate(omega, u, inertia, h, cfg, Some(&mut trace))?;
    Ok((x, trace))
}

/// Residual of the implicit rate equation at candidate `x`.
pub fn rate_residual(x: &Vec3, omega: &Vec3, u: &Vec3, inertia: &InertiaTensor, h: f64) -> Vec3 {
    let i = inertia.matrix();
    c_exp(&(-h * x)) * (i * x) - (c_exp(&(h * omega)) * (i * omega) + h * u)
}

fn solve_rate(
    omega: &Vec3,
    u: &Vec3,
    inertia: &InertiaTensor,
    h: f64,
    cfg: &NewtonSolverConfig,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<Vec3> {
    let i = inertia.matrix();
    let rhs = c_exp(&(h * omega)) * (i * omega) + h * u;
    let mut x = *omega;
    let mut residual = c_exp(&(-h * x)) * (i * x) - rhs;
    let mut norm = residual.amax();
    for _ in 0..cfg.max_iterations {
        if norm <= cfg.tolerance {
            return Ok(x);
        }
        let jac = c_exp_momentum_jacobian(&x, i, -h);
        let dx = jac.lu().solve(&residual).ok_or(Error::NewtonDiverged {
            iterations: 0,
            residual: norm,
        })?;
        x -= dx;
        residual = c_exp(&(-h * x)) * (i * x) - rhs;
        norm = residual.amax();
        if let Some(t) = trace.as_deref_mut() {
            t.push(norm);
        }
        if !norm.is_finite() {
            break;
        }
    }
    if norm <= cfg.tolerance {
        return Ok(x);
    }
    Err(Error::NewtonDiverged {
        iterations: cfg.max_iterations,
        residual: norm,
    })
}

/// Derivative of the converged step `Ω ↦ Ω₊` with respect to `Ω`.
pub fn step_rate_jacobian(
    omega: &Vec3,
    omega_next: &Vec3,
    inertia: &InertiaTensor,
    h: f64,
) -> Mat3 {
    let i = inertia.matrix();
    let lhs = c_exp_momentum_jacobian(omega_next, i, -h);
    let rhs = c_exp_momentum_jacobian(omega, i, h);
    lhs.lu().solve(&rhs).unwrap_or_else(Mat3::identity)
}

/// `q ⊗ exp(hΩ/2)` without renormalization.
pub fn step_quaternion_raw(q: &Vec4, omega: &Vec3, h: f64) -> Vec4 {
    hamilton(q, &UnitQuaternion::exp(&(h * omega)).to_vec4())
}

pub fn step_orientation_q(q: &UnitQuaternion, omega: &Vec3, h: f64) -> UnitQuaternion {
    let next = *q * UnitQuaternion::exp(&(h * omega));
    crate::so3::quat_normalize(&next.to_vec4()).unwrap_or(next)
}

pub fn step_orientation_r(r: &Mat3, omega: &Vec3, h: f64) -> Mat3 {
    r * exp_so3(&(h * omega))
}

pub fn step_rigid_body(
    state: &RigidBodyState,
    u: &Vec3,
    inertia: &InertiaTensor,
    h: f64,
    cfg: &NewtonSolverConfig,
) -> Result<RigidBodyState> {
    Ok(RigidBodyState {
        attitude: step_orientation_q(&state.attitude, &state.omega, h),
        omega: step_rate(&state.omega, u, inertia, h, cfg)?,
    })
}

/// Forward-Euler rate update, kept as a non-conservative reference.
pub fn explicit_euler_step(
    state: &RigidBodyState,
    torque: &Vec3,
    inertia: &InertiaTensor,
    h: f64,
) -> RigidBodyState {
    RigidBodyState {
        attitude: step_orientation_q(&state.attitude, &state.omega, h),
        omega: state.omega + h * rigid_body_acceleration(&state.omega, torque, inertia),
    }
}
