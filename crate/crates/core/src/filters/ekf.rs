//! Extended Kalman filter on the stacked state `[q; Ω]`.
//!
//! Prediction uses the same Lie-group step as the truth simulator. The
//! correction is additive in `R⁷`, after which the quaternion block is
//! projected back onto the unit sphere.

use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use super::{symmetrize, AttitudeFilter, FilterKind, FilterModel, Mat6, Mat7, StepInput, Vec7};
use crate::error::{Error, Result};
use crate::integrator::{step_quaternion_raw, step_rate, step_rate_jacobian};
use crate::model::Measurement;
use crate::so3::{
    hat, left_product_matrix, quat_normalize, right_product_matrix, rotation_from_raw, Mat3, Vec3,
    Vec4,
};

pub type Mat67 = SMatrix<f64, 6, 7>;

/// Largest admissible condition number of the innovation covariance.
pub const MAX_INNOVATION_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianFilterConfig {
    pub initial_quaternion: [f64; 4],
    pub initial_omega_rad_s: [f64; 3],
    /// Diagonal of the initial covariance.
    pub initial_covariance_diag: [f64; 7],
    /// Quaternion-block process noise standard deviation.
    pub quaternion_process_std: f64,
    /// Rate-block process noise standard deviation per step (rad/s).
    pub rate_process_std_rad_s: f64,
    /// Assumed per-component noise of each direction. Defaults to the
    /// sensor's; must be positive.
    #[serde(default)]
    pub measurement_std: Option<[f64; 2]>,
}

impl Default for GaussianFilterConfig {
    fn default() -> Self {
        Self {
            initial_quaternion: [1.0, 0.0, 0.0, 0.0],
            initial_omega_rad_s: [0.0; 3],
            initial_covariance_diag: [1.0; 7],
            quaternion_process_std: 1e-9,
            rate_process_std_rad_s: 1e-4,
            measurement_std: None,
        }
    }
}

/// Mean, covariance and noise matrices of a quaternion Gaussian filter.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFilterState {
    pub x: Vec7,
    pub p: Mat7,
    pub process_noise: Mat7,
    pub measurement_noise: Mat6,
}

impl GaussianFilterState {
    pub fn new(cfg: &GaussianFilterConfig, model: &FilterModel) -> Result<Self> {
        let q = quat_normalize(&Vec4::from(cfg.initial_quaternion))?;
        let mut x = Vec7::zeros();
        x.fixed_rows_mut::<4>(0).copy_from(&q.to_vec4());
        x.fixed_rows_mut::<3>(4)
            .copy_from(&Vec3::from(cfg.initial_omega_rad_s));
        if cfg.initial_covariance_diag.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidConfig(
                "initial covariance must be non-negative".into(),
            ));
        }
        let mut w = Mat7::zeros();
        for i in 0..4 {
            w[(i, i)] = cfg.quaternion_process_std.powi(2);
        }
        for i in 4..7 {
            w[(i, i)] = cfg.rate_process_std_rad_s.powi(2);
        }
        Ok(Self {
            x,
            p: Mat7::from_diagonal(&Vec7::from(cfg.initial_covariance_diag)),
            process_noise: w,
            measurement_noise: measurement_noise(
                &cfg.measurement_std.unwrap_or(model.noise_scales),
            ),
        })
    }

    pub fn quaternion(&self) -> Vec4 {
        self.x.fixed_rows::<4>(0).into_owned()
    }

    pub fn omega(&self) -> Vec3 {
        self.x.fixed_rows::<3>(4).into_owned()
    }
}

pub fn measurement_noise(scales: &[f64; 2]) -> Mat6 {
    let mut q = Mat6::zeros();
    for i in 0..6 {
        q[(i, i)] = scales[i / 3].powi(2);
    }
    q
}

/// One step of the discrete transition on raw 7-vectors. The quaternion is
/// not renormalized, so that [`transition_jacobian`] is its exact derivative.
pub fn transition(x: &Vec7, torque: &Vec3, model: &FilterModel) -> Result<Vec7> {
    let q = x.fixed_rows::<4>(0).into_owned();
    let w = x.fixed_rows::<3>(4).into_owned();
    let mut out = Vec7::zeros();
    out.fixed_rows_mut::<4>(0)
        .copy_from(&step_quaternion_raw(&q, &w, model.step_s));
    out.fixed_rows_mut::<3>(4).copy_from(&step_rate(
        &w,
        torque,
        &model.inertia,
        model.step_s,
        &model.newton,
    )?);
    Ok(out)
}

/// Derivative of `[cos s, sinc(s) a]` with respect to `a`, `s = |a|`.
fn half_angle_exp_jacobian(a: &Vec3) -> SMatrix<f64, 4, 3> {
    let s = a.norm();
    let (sinc, c) = if s < 1e-4 {
        let s2 = s * s;
        (1.0 - s2 / 6.0 + s2 * s2 / 120.0, -1.0 / 3.0 + s2 / 30.0)
    } else {
        (s.sin() / s, (s * s.cos() - s.sin()) / (s * s * s))
    };
    let mut j = SMatrix::<f64, 4, 3>::zeros();
    j.fixed_view_mut::<1, 3>(0, 0)
        .copy_from(&(-sinc * a.transpose()));
    j.fixed_view_mut::<3, 3>(1, 0)
        .copy_from(&(Mat3::identity() * sinc + c * a * a.transpose()));
    j
}

/// Jacobian of [`transition`] at `x`, given the already computed next rate.
pub fn transition_jacobian(x: &Vec7, omega_next: &Vec3, model: &FilterModel) -> Mat7 {
    let h = model.step_s;
    let q = x.fixed_rows::<4>(0).into_owned();
    let w = x.fixed_rows::<3>(4).into_owned();
    let a = 0.5 * h * w;
    let s = a.norm();
    let e = if s == 0.0 {
        Vec4::new(1.0, 0.0, 0.0, 0.0)
    } else {
        let sinc = s.sin() / s;
        Vec4::new(s.cos(), sinc * a.x, sinc * a.y, sinc * a.z)
    };
    let mut f = Mat7::zeros();
    f.fixed_view_mut::<4, 4>(0, 0)
        .copy_from(&right_product_matrix(&e));
    f.fixed_view_mut::<4, 3>(0, 4)
        .copy_from(&(left_product_matrix(&q) * half_angle_exp_jacobian(&a) * (0.5 * h)));
    f.fixed_view_mut::<3, 3>(4, 4)
        .copy_from(&step_rate_jacobian(&w, omega_next, &model.inertia, h));
    f
}

/// `[r(q)ᵀa₁; r(q)ᵀa₂]` with `r` the homogeneous quadratic rotation map.
pub fn output(q: &Vec4, references: &[Vec3; 2]) -> Measurement {
    let rt = rotation_from_raw(q).transpose();
    let (y1, y2) = (rt * references[0], rt * references[1]);
    Measurement::from_fn(|i, _| if i < 3 { y1[i] } else { y2[i - 3] })
}

/// Derivative of [`output`] with respect to the full state (zero over `Ω`).
pub fn output_jacobian(q: &Vec4, references: &[Vec3; 2]) -> Mat67 {
    let w = q[0];
    let v = Vec3::new(q[1], q[2], q[3]);
    let mut h = Mat67::zeros();
    for (i, a) in references.iter().enumerate() {
        let dw = 2.0 * w * a - 2.0 * v.cross(a);
        let dv = -2.0 * a * v.transpose()
            + Mat3::identity() * (2.0 * v.dot(a))
            + 2.0 * v * a.transpose()
            + 2.0 * w * hat(a);
        h.fixed_view_mut::<3, 1>(3 * i, 0).copy_from(&dw);
        h.fixed_view_mut::<3, 3>(3 * i, 1).copy_from(&dv);
    }
    h
}

pub fn condition_number(m: &Mat6) -> f64 {
    let eig = m.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn ekf_predict(
    state: &GaussianFilterState,
    torque: &Vec3,
    model: &FilterModel,
) -> Result<GaussianFilterState> {
    let x_next = transition(&state.x, torque, model)?;
    let f = transition_jacobian(&state.x, &x_next.fixed_rows::<3>(4).into_owned(), model);
    let p = symmetrize(&(f * state.p * f.transpose() + state.process_noise));
    Ok(GaussianFilterState {
        x: x_next,
        p,
        ..state.clone()
    })
}

pub fn ekf_update(
    state: &GaussianFilterState,
    y: &Measurement,
    model: &FilterModel,
) -> Result<GaussianFilterState> {
    let q = state.quaternion();
    let y_hat = output(&q, &model.references);
    let h = output_jacobian(&q, &model.references);
    let py = symmetrize(&(h * state.p * h.transpose() + state.measurement_noise));
    let condition = condition_number(&py);
    if condition > MAX_INNOVATION_CONDITION {
        return Err(Error::SingularInnovation { condition });
    }
    let pxy = state.p * h.transpose();
    let py_inv = py
        .try_inverse()
        .ok_or(Error::SingularInnovation { condition })?;
    let k = pxy * py_inv;
    let mut x = state.x + k * (y - y_hat);
    let p = symmetrize(&(state.p - k * py * k.transpose()));
    let qn = quat_normalize(&x.fixed_rows::<4>(0).into_owned())?;
    x.fixed_rows_mut::<4>(0).copy_from(&qn.to_vec4());
    Ok(GaussianFilterState {
        x,
        p,
        ..state.clone()
    })
}

pub struct Ekf {
    pub state: GaussianFilterState,
    model: FilterModel,
}

impl Ekf {
    pub fn new(cfg: &GaussianFilterConfig, model: FilterModel) -> Result<Self> {
        Ok(Self {
            state: GaussianFilterState::new(cfg, &model)?,
            model,
        })
    }

    pub fn model(&self) -> &FilterModel {
        &self.model
    }
}

impl AttitudeFilter for Ekf {
    fn kind(&self) -> FilterKind {
        FilterKind::Ekf
    }

    fn step(&mut self, input: &StepInput<'_>) -> Result<()> {
        let predicted = ekf_predict(&self.state, &input.torque, &self.model)?;
        self.state = ekf_update(&predicted, input.y_next, &self.model)?;
        Ok(())
    }

    fn rotation(&self) -> Mat3 {
        rotation_from_raw(&self.state.quaternion())
    }

    fn omega(&self) -> Vec3 {
        self.state.omega()
    }

    fn group_error(&self) -> f64 {
        (self.state.quaternion().norm() - 1.0).abs()
    }

    fn diagnostic_names(&self) -> &'static [&'static str] {
        &["trace_p"]
    }

    fn diagnostics(&self) -> Vec<f64> {
        vec![self.state.p.trace()]
    }
}
