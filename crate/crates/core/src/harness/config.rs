//! Experiment configuration and the two built-in case studies.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::ekf::GaussianFilterConfig;
use crate::filters::mef::MefConfig;
use crate::filters::pf::{PfConfig, TuningRule};
use crate::filters::ukf::UtParams;
use crate::filters::{FilterKind, FilterModel};
use crate::integrator::{InertiaTensor, NewtonSolverConfig, RigidBodyState};
use crate::model::{
    MeasurementModel, ModelErrorSignal, SinusoidTriplet, TorqueProfile, TruthModel, Waveform,
};
use crate::so3::{Mat3, UnitQuaternion, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Platform {
    Uav,
    Satellite,
}

/// Which of the two model-error experiments a preset describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    ProcessNoise,
    Deterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub rotation_angle_rad: f64,
    pub rotation_axis: [f64; 3],
    pub omega_rad_s: [f64; 3],
}

impl InitialState {
    pub fn to_state(&self) -> Result<RigidBodyState> {
        Ok(RigidBodyState {
            attitude: UnitQuaternion::from_axis_angle(
                self.rotation_angle_rad,
                &Vec3::from(self.rotation_axis),
            )?,
            omega: Vec3::from(self.omega_rad_s),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UkfBlock {
    pub gaussian: GaussianFilterConfig,
    pub unscented: UtParams,
}

/// Per-filter initialisation; a filter runs iff its block is present.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterBlocks {
    #[serde(default)]
    pub ekf: Option<GaussianFilterConfig>,
    #[serde(default)]
    pub ukf: Option<UkfBlock>,
    #[serde(default)]
    pub mef: Option<MefConfig>,
    #[serde(default)]
    pub pf: Option<PfConfig>,
}

impl FilterBlocks {
    pub fn selected(&self) -> Vec<FilterKind> {
        let mut out = Vec::new();
        if self.ekf.is_some() {
            out.push(FilterKind::Ekf);
        }
        if self.ukf.is_some() {
            out.push(FilterKind::Ukf);
        }
        if self.mef.is_some() {
            out.push(FilterKind::Mef);
        }
        if self.pf.is_some() {
            out.push(FilterKind::Pf);
        }
        out
    }

    /// Drops every block not listed in `keep`.
    pub fn retain(&mut self, keep: &[FilterKind]) {
        if !keep.contains(&FilterKind::Ekf) {
            self.ekf = None;
        }
        if !keep.contains(&FilterKind::Ukf) {
            self.ukf = None;
        }
        if !keep.contains(&FilterKind::Mef) {
            self.mef = None;
        }
        if !keep.contains(&FilterKind::Pf) {
            self.pf = None;
        }
    }
}

/// Offline adjustment of the PF model-error penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PfTuningConfig {
    /// Target per-component residual variance (dimensionless); defaults to `d²`.
    #[serde(default)]
    pub target_variance: Option<f64>,
    pub rule: TuningRule,
    pub max_rounds: usize,
}

impl Default for PfTuningConfig {
    fn default() -> Self {
        Self {
            target_variance: None,
            rule: TuningRule::default(),
            max_rounds: 40,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub platform: Platform,
    pub step_s: f64,
    /// Simulated duration.
    pub horizon_s: f64,
    /// Inertia tensor about the centre of mass (kg·m²), row-major.
    pub inertia_kg_m2: [[f64; 3]; 3],
    pub torque: TorqueProfile,
    /// Model error `δ` (rad/s²).
    pub model_error: ModelErrorSignal,
    /// Disturbance input matrix `G`, row-major.
    pub disturbance_gain: [[f64; 3]; 3],
    pub measurement: MeasurementModel,
    pub initial_state: InitialState,
    #[serde(default)]
    pub newton: NewtonSolverConfig,
    pub filters: FilterBlocks,
    #[serde(default)]
    pub pf_tuning: PfTuningConfig,
}

fn row_major(m: &[[f64; 3]; 3]) -> Mat3 {
    Mat3::from_fn(|i, j| m[i][j])
}

fn diag(a: f64, b: f64, c: f64) -> [[f64; 3]; 3] {
    [[a, 0.0, 0.0], [0.0, b, 0.0], [0.0, 0.0, c]]
}

fn triplet(
    periods_s: [f64; 3],
    amplitude: f64,
    sign: [f64; 3],
    waveform: [Waveform; 3],
) -> SinusoidTriplet {
    SinusoidTriplet {
        amplitude: [amplitude; 3],
        angular_frequency_rad_s: periods_s.map(|p| 2.0 * PI / p),
        sign,
        waveform,
    }
}

const SIN_SIN_COS: [Waveform; 3] = [Waveform::Sin, Waveform::Sin, Waveform::Cos];
const PLUS_MINUS_PLUS: [f64; 3] = [1.0, -1.0, 1.0];

/// Per-component standard deviation of a unit direction perturbed by `deg` degrees.
pub fn direction_noise_std(deg: f64) -> f64 {
    deg.to_radians().sin()
}

impl ExperimentConfig {
    /// UAV case: fast body, poor sensors.
    pub fn case1(variant: Variant) -> Self {
        let model_error = match variant {
            Variant::ProcessNoise => ModelErrorSignal::GaussianWhite {
                std_rad_s2: 0.1,
                seed: 1,
            },
            Variant::Deterministic => ModelErrorSignal::DeterministicSinusoid(triplet(
                [5.0; 3],
                0.1,
                PLUS_MINUS_PLUS,
                SIN_SIN_COS,
            )),
        };
        Self::build(
            Platform::Uav,
            100.0,
            diag(6.0, 7.0, 9.0),
            TorqueProfile::SinusoidTriplet(triplet(
                [3.0, 1.0, 5.0],
                1.0,
                PLUS_MINUS_PLUS,
                SIN_SIN_COS,
            )),
            model_error,
            InitialState {
                rotation_angle_rad: 1.2,
                rotation_axis: [1.0, 1.0, 1.0],
                omega_rad_s: [0.2, 0.4, 0.5],
            },
        )
    }

    /// Satellite case: slow, heavy body.
    pub fn case2(variant: Variant) -> Self {
        let model_error = match variant {
            Variant::ProcessNoise => ModelErrorSignal::GaussianWhite {
                std_rad_s2: 0.1,
                seed: 1,
            },
            Variant::Deterministic => ModelErrorSignal::DeterministicSinusoid(triplet(
                [13.0, 12.0, 17.0],
                0.1,
                PLUS_MINUS_PLUS,
                SIN_SIN_COS,
            )),
        };
        Self::build(
            Platform::Satellite,
            40.0,
            diag(102.0, 105.0, 103.0),
            TorqueProfile::SinusoidTriplet(triplet(
                [25.0, 13.0, 37.0],
                1.0,
                PLUS_MINUS_PLUS,
                SIN_SIN_COS,
            )),
            model_error,
            InitialState {
                rotation_angle_rad: 2.3,
                rotation_axis: [1.0, 1.0, 1.0],
                omega_rad_s: [0.1, 0.3, 0.2],
            },
        )
    }

    pub fn preset(platform: Platform, variant: Variant) -> Self {
        match platform {
            Platform::Uav => Self::case1(variant),
            Platform::Satellite => Self::case2(variant),
        }
    }

    fn build(
        platform: Platform,
        horizon_s: f64,
        inertia_kg_m2: [[f64; 3]; 3],
        torque: TorqueProfile,
        model_error: ModelErrorSignal,
        initial_state: InitialState,
    ) -> Self {
        let d = direction_noise_std(20.0);
        Self {
            platform,
            step_s: 1e-3,
            horizon_s,
            inertia_kg_m2,
            torque,
            model_error,
            disturbance_gain: diag(1.0, 1.0, 1.0),
            measurement: MeasurementModel {
                a1: [1.0, 0.0, 0.0],
                a2: [0.0, 1.0, 0.0],
                d1: d,
                d2: d,
                seed: 2,
            },
            initial_state,
            newton: NewtonSolverConfig::default(),
            filters: FilterBlocks {
                ekf: Some(GaussianFilterConfig::default()),
                ukf: Some(UkfBlock {
                    gaussian: GaussianFilterConfig::default(),
                    unscented: UtParams::default(),
                }),
                mef: Some(MefConfig::default()),
                pf: Some(PfConfig::default()),
            },
            pf_tuning: PfTuningConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn steps(&self) -> usize {
        (self.horizon_s / self.step_s).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_s > 0.0 && self.step_s.is_finite()) {
            return Err(Error::InvalidConfig("step must be positive".into()));
        }
        if !(self.horizon_s >= self.step_s && self.horizon_s.is_finite()) {
            return Err(Error::InvalidConfig(
                "horizon must be at least one step".into(),
            ));
        }
        if self.filters.selected().is_empty() {
            return Err(Error::InvalidConfig("no filter selected".into()));
        }
        if let Some(pf) = &self.filters.pf {
            if let Some(hp) = pf.horizon_s {
                if !(hp >= self.step_s) {
                    return Err(Error::InvalidConfig(
                        "prediction horizon must be at least one step".into(),
                    ));
                }
            }
        }
        if let Some(ukf) = &self.filters.ukf {
            ukf.unscented.validate(7)?;
        }
        let gaussian = self
            .filters
            .ekf
            .iter()
            .chain(self.filters.ukf.iter().map(|u| &u.gaussian));
        for g in gaussian {
            let assumed = g.measurement_std.unwrap_or(self.measurement.scales());
            if !assumed.iter().all(|d| *d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidConfig(
                    "EKF/UKF need a positive assumed measurement noise; set measurement_std for a noiseless sensor".into(),
                ));
            }
        }
        if !row_major(&self.disturbance_gain)
            .iter()
            .all(|x| x.is_finite())
        {
            return Err(Error::InvalidConfig(
                "disturbance gain must be finite".into(),
            ));
        }
        if !(self.pf_tuning.rule.factor > 1.0 && self.pf_tuning.rule.dead_band >= 0.0) {
            return Err(Error::InvalidConfig(
                "tuning factor must exceed 1 and the dead band be non-negative".into(),
            ));
        }
        self.inertia()?;
        self.torque.validate()?;
        self.model_error.validate()?;
        self.measurement.validate()?;
        self.newton.validate()?;
        self.initial_state.to_state()?;
        Ok(())
    }

    pub fn inertia(&self) -> Result<InertiaTensor> {
        InertiaTensor::new(row_major(&self.inertia_kg_m2))
    }

    pub fn truth_model(&self) -> Result<TruthModel> {
        Ok(TruthModel {
            inertia: self.inertia()?,
            torque: self.torque.clone(),
            model_error: self.model_error.clone(),
            disturbance_gain: row_major(&self.disturbance_gain),
            newton: self.newton,
        })
    }

    pub fn filter_model(&self) -> Result<FilterModel> {
        Ok(FilterModel {
            inertia: self.inertia()?,
            step_s: self.step_s,
            newton: self.newton,
            references: self.measurement.references(),
            noise_scales: self.measurement.scales(),
            disturbance_gain: row_major(&self.disturbance_gain),
        })
    }

    /// Model-error seed, or `None` when the model error is deterministic.
    pub fn model_error_seed(&self) -> Option<u64> {
        match self.model_error {
            ModelErrorSignal::GaussianWhite { seed, .. } => Some(seed),
            _ => None,
        }
    }

    /// Copy with every random seed advanced by `offset`.
    pub fn with_seed_offset(&self, offset: u64) -> Self {
        let mut out = self.clone();
        out.measurement.seed = self.measurement.seed.wrapping_add(offset);
        if let ModelErrorSignal::GaussianWhite { seed, .. } = &mut out.model_error {
            *seed = seed.wrapping_add(offset);
        }
        out
    }

    /// Per-component residual variance the PF tuning aims for.
    pub fn pf_target_variance(&self) -> f64 {
        self.pf_tuning.target_variance.unwrap_or_else(|| {
            let [d1, d2] = self.measurement.scales();
            0.5 * (d1 * d1 + d2 * d2)
        })
    }
}
