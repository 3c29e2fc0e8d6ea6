//! Attitude and rate estimators sharing a common stepping interface.
//!
//! Every filter advances from `t_k` to `t_{k+1}` per call. The harness hands it
//! the known torque at `t_k` together with the measurements taken at both
//! ends of the step; each filter uses whichever its algorithm calls for.

use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::integrator::{InertiaTensor, NewtonSolverConfig};
use crate::model::Measurement;
use crate::so3::{Mat3, Vec3};

pub mod bias;
pub mod ekf;
pub mod mef;
pub mod pf;
pub mod ukf;

pub use ekf::Ekf;
pub use mef::Mef;
pub use pf::Pf;
pub use ukf::Ukf;

pub type Vec7 = nalgebra::SVector<f64, 7>;
pub type Mat7 = SMatrix<f64, 7, 7>;
pub type Mat6 = SMatrix<f64, 6, 6>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Ekf,
    Ukf,
    Mef,
    Pf,
}

impl FilterKind {
    pub const ALL: [FilterKind; 4] = [
        FilterKind::Ekf,
        FilterKind::Ukf,
        FilterKind::Mef,
        FilterKind::Pf,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FilterKind::Ekf => "ekf",
            FilterKind::Ukf => "ukf",
            FilterKind::Mef => "mef",
            FilterKind::Pf => "pf",
        }
    }
}

impl std::fmt::Display for FilterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Plant knowledge shared by all filters.
#[derive(Debug, Clone)]
pub struct FilterModel {
    pub inertia: InertiaTensor,
    pub step_s: f64,
    pub newton: NewtonSolverConfig,
    pub references: [Vec3; 2],
    pub noise_scales: [f64; 2],
    pub disturbance_gain: Mat3,
}

pub struct StepInput<'a> {
    pub time_s: f64,
    /// Applied torque held over the step.
    pub torque: Vec3,
    /// Measurement at `t_k`.
    pub y_now: &'a Measurement,
    /// Measurement at `t_{k+1}`.
    pub y_next: &'a Measurement,
}

pub trait AttitudeFilter: Send {
    fn kind(&self) -> FilterKind;

    fn step(&mut self, input: &StepInput<'_>) -> Result<()>;

    /// Current attitude estimate (body to inertial).
    fn rotation(&self) -> Mat3;

    /// Current body-rate estimate in rad/s.
    fn omega(&self) -> Vec3;

    /// Deviation of the attitude state from its group: `|‖q‖ − 1|` for
    /// quaternion filters, `‖RᵀR − I‖_∞` for rotation-matrix filters.
    fn group_error(&self) -> f64;

    /// Names of the filter-specific diagnostic columns.
    fn diagnostic_names(&self) -> &'static [&'static str];

    fn diagnostics(&self) -> Vec<f64>;
}

pub(crate) fn symmetrize<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}
