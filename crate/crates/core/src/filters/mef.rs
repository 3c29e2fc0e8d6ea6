//! Second-order minimum-energy filter on `SO(3) × R³`.
//!
//! The attitude is corrected on the group through the exponential map, the
//! rate through the implicit momentum equation, and a 6×6 gain follows a
//! forward-Euler discretized Riccati flow.

use serde::{Deserialize, Serialize};

use super::{symmetrize, AttitudeFilter, FilterKind, FilterModel, Mat6, StepInput};
use crate::error::{Error, Result};
use crate::integrator::step_rate;
use crate::model::{split, Measurement};
use crate::so3::{
    exp_so3, hat, orthogonality_error, quat_normalize, quat_to_rot, Mat3, Vec3, Vec4,
};

/// Gain norm beyond which the filter is declared diverged.
pub const MAX_GAIN_NORM: f64 = 1e6;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MefConfig {
    pub initial_quaternion: [f64; 4],
    pub initial_omega_rad_s: [f64; 3],
    pub initial_gain_diag: [f64; 6],
    /// Forgetting factor of the gain flow (1/s).
    pub forgetting: f64,
    /// Output weights `q_i`. When absent, `q_i = d_i²` so each output enters
    /// the curvature term with unit weight.
    pub output_weights: Option<[f64; 2]>,
    /// Scale of the rate-channel input weight `B₂R⁻¹B₂ᵀ = scale · G Gᵀ`.
    pub process_weight: f64,
    /// Apply the rate correction as the momentum impulse `h 𝕀 K₂₁ r` rather
    /// than `h K₂₁ r`.
    pub momentum_correction: bool,
}

impl Default for MefConfig {
    fn default() -> Self {
        Self {
            initial_quaternion: [1.0, 0.0, 0.0, 0.0],
            initial_omega_rad_s: [0.0; 3],
            initial_gain_diag: [1.0; 6],
            forgetting: 0.0,
            output_weights: None,
            process_weight: 0.1,
            momentum_correction: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MefState {
    pub rotation: Mat3,
    pub omega: Vec3,
    pub gain: Mat6,
    pub forgetting: f64,
    /// `q_i / d_i²` for each output.
    pub curvature_weights: [f64; 2],
    pub input_weight: Mat3,
    pub momentum_correction: bool,
}

impl MefState {
    pub fn new(cfg: &MefConfig, model: &FilterModel) -> Result<Self> {
        let q = quat_normalize(&Vec4::from(cfg.initial_quaternion))?;
        let curvature_weights = match cfg.output_weights {
            None => [1.0, 1.0],
            Some(q) => {
                let mut w = [0.0; 2];
                for i in 0..2 {
                    let d2 = model.noise_scales[i].powi(2);
                    if d2 == 0.0 {
                        return Err(Error::InvalidConfig(
                            "explicit output weights need non-zero noise scales".into(),
                        ));
                    }
                    w[i] = q[i] / d2;
                }
                w
            }
        };
        if !(cfg.process_weight >= 0.0 && cfg.forgetting >= 0.0) {
            return Err(Error::InvalidConfig(
                "process weight and forgetting factor must be non-negative".into(),
            ));
        }
        let g = model.disturbance_gain;
        Ok(Self {
            rotation: quat_to_rot(&q),
            omega: Vec3::from(cfg.initial_omega_rad_s),
            gain: Mat6::from_diagonal(&cfg.initial_gain_diag.into()),
            forgetting: cfg.forgetting,
            curvature_weights,
            input_weight: g * g.transpose() * cfg.process_weight,
            momentum_correction: cfg.momentum_correction,
        })
    }
}

/// `r = −Σ ŷ_i × y_i`.
pub fn mef_residual(y_hat: &[Vec3; 2], y: &[Vec3; 2]) -> Vec3 {
    -(y_hat[0].cross(&y[0]) + y_hat[1].cross(&y[1]))
}

/// Linearized state matrix about the current rate estimate.
pub fn state_matrix(omega: &Vec3, model: &FilterModel) -> Mat6 {
    let i = model.inertia.matrix();
    let mut a = Mat6::zeros();
    a.fixed_view_mut::<3, 3>(0, 0).copy_from(&-hat(omega));
    a.fixed_view_mut::<3, 3>(0, 3).copy_from(&Mat3::identity());
    a.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&(model.inertia.inverse() * (hat(&(i * omega)) - hat(omega) * i)));
    a
}

/// Output curvature block `Σ −w_i (ŷ_i^× y_i^× + y_i^× ŷ_i^×)/2`.
pub fn curvature_matrix(y_hat: &[Vec3; 2], y: &[Vec3; 2], weights: &[f64; 2]) -> Mat6 {
    let mut e = Mat6::zeros();
    let mut block = Mat3::zeros();
    for i in 0..2 {
        let (a, b) = (hat(&y_hat[i]), hat(&y[i]));
        block -= (a * b + b * a) * (0.5 * weights[i]);
    }
    e.fixed_view_mut::<3, 3>(0, 0).copy_from(&block);
    e
}

/// Connection term `½ (K₁₁ r)^×` in the upper-left block.
pub fn connection_matrix(gain: &Mat6, residual: &Vec3) -> Mat6 {
    let k11: Mat3 = gain.fixed_view::<3, 3>(0, 0).into_owned();
    let mut w = Mat6::zeros();
    w.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(hat(&(k11 * residual)) * 0.5));
    w
}

/// Time derivative of the gain.
pub fn gain_rate(
    state: &MefState,
    y_hat: &[Vec3; 2],
    y: &[Vec3; 2],
    residual: &Vec3,
    model: &FilterModel,
) -> Mat6 {
    let k = &state.gain;
    let a = state_matrix(&state.omega, model);
    let e = curvature_matrix(y_hat, y, &state.curvature_weights);
    let mut brb = Mat6::zeros();
    brb.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&state.input_weight);
    let w = connection_matrix(k, residual);
    -k * state.forgetting + a * k + k * a.transpose() - k * e * k + brb - w * k - k * w.transpose()
}

pub fn mef_step(
    state: &MefState,
    y: &Measurement,
    torque: &Vec3,
    model: &FilterModel,
) -> Result<MefState> {
    let h = model.step_s;
    let rt = state.rotation.transpose();
    let y_hat = [rt * model.references[0], rt * model.references[1]];
    let y = split(y);
    let r = mef_residual(&y_hat, &y);

    let k11: Mat3 = state.gain.fixed_view::<3, 3>(0, 0).into_owned();
    let k21: Mat3 = state.gain.fixed_view::<3, 3>(3, 0).into_owned();
    let rotation = state.rotation * exp_so3(&((state.omega + k11 * r) * h));

    let rate_correction = k21 * r;
    let impulse = if state.momentum_correction {
        model.inertia.matrix() * rate_correction
    } else {
        rate_correction
    };
    let omega = step_rate(
        &state.omega,
        &(torque + impulse),
        &model.inertia,
        h,
        &model.newton,
    )?;

    let gain = symmetrize(&(state.gain + gain_rate(state, &y_hat, &y, &r, model) * h));
    let norm = gain.norm();
    if !(norm <= MAX_GAIN_NORM) {
        return Err(Error::GainDiverged { norm });
    }
    Ok(MefState {
        rotation,
        omega,
        gain,
        ..state.clone()
    })
}

pub struct Mef {
    pub state: MefState,
    model: FilterModel,
    last_residual: Vec3,
}

impl Mef {
    pub fn new(cfg: &MefConfig, model: FilterModel) -> Result<Self> {
        Ok(Self {
            state: MefState::new(cfg, &model)?,
            model,
            last_residual: Vec3::zeros(),
        })
    }
}

impl AttitudeFilter for Mef {
    fn kind(&self) -> FilterKind {
        FilterKind::Mef
    }

    fn step(&mut self, input: &StepInput<'_>) -> Result<()> {
        let rt = self.state.rotation.transpose();
        let y_hat = [rt * self.model.references[0], rt * self.model.references[1]];
        self.last_residual = mef_residual(&y_hat, &split(input.y_now));
        self.state = mef_step(&self.state, input.y_now, &input.torque, &self.model)?;
        Ok(())
    }

    fn rotation(&self) -> Mat3 {
        self.state.rotation
    }

    fn omega(&self) -> Vec3 {
        self.state.omega
    }

    fn group_error(&self) -> f64 {
        orthogonality_error(&self.state.rotation)
            .max((self.state.rotation.determinant() - 1.0).abs())
    }

    fn diagnostic_names(&self) -> &'static [&'static str] {
        &["gain_norm", "residual_norm"]
    }

    fn diagnostics(&self) -> Vec<f64> {
        vec![self.state.gain.norm(), self.last_residual.norm()]
    }
}
