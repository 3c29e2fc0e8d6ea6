//! Predictive filter on `SO(3) × R³`.
//!
//! The attitude is propagated without correction. Each step solves a small
//! quadratic problem for the model-error correction `δ*` that best explains
//! the next measurement over a short prediction horizon, and feeds it into
//! the rate equation as the impulse `h 𝕀 G δ*`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{AttitudeFilter, FilterKind, FilterModel, Mat6, StepInput};
use crate::error::{Error, Result};
use crate::integrator::{rigid_body_acceleration, step_rate, InertiaTensor};
use crate::model::{predicted_output, split, Measurement};
use crate::so3::{
    exp_so3, hat, orthogonality_error, quat_normalize, quat_to_rot, Mat3, Vec3, Vec4,
};

/// Prediction horizon used when none is configured. A horizon of one step
/// leaves the correction loop almost undamped at practical penalties; longer
/// horizons damp it but bias the estimate by roughly `Ω · horizon`.
pub const DEFAULT_HORIZON_S: f64 = 0.05;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PfConfig {
    pub initial_quaternion: [f64; 4],
    pub initial_omega_rad_s: [f64; 3],
    /// Prediction-error penalty `Q = q · I`.
    pub prediction_penalty: f64,
    /// Model-error penalty `Σ = s · I`.
    pub correction_penalty: f64,
    /// Prediction horizon; `None` means one integration step.
    pub horizon_s: Option<f64>,
    /// Keep the first-order term of the output expansion.
    pub first_order_term: bool,
    /// Matching the prediction `horizon_s` ahead against a measurement one
    /// step ahead makes the internal estimate lag the truth by
    /// `horizon_s − h`. When set, the internal state is driven by the torque
    /// from that far back and reported after propagation through the
    /// torques since.
    #[serde(default)]
    pub lead_compensation: bool,
}

impl Default for PfConfig {
    fn default() -> Self {
        Self {
            initial_quaternion: [1.0, 0.0, 0.0, 0.0],
            initial_omega_rad_s: [0.0; 3],
            prediction_penalty: 1e-3,
            correction_penalty: 5e-3,
            horizon_s: Some(DEFAULT_HORIZON_S),
            first_order_term: true,
            lead_compensation: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfState {
    pub rotation: Mat3,
    pub omega: Vec3,
    pub prediction_penalty: Mat3,
    pub correction_penalty: Mat3,
    pub horizon_s: f64,
    pub first_order_term: bool,
    residual_moment: Mat6,
    residual_count: usize,
}

impl PfState {
    pub fn new(cfg: &PfConfig, model: &FilterModel) -> Result<Self> {
        let q = quat_normalize(&Vec4::from(cfg.initial_quaternion))?;
        if !(cfg.prediction_penalty > 0.0 && cfg.correction_penalty > 0.0) {
            return Err(Error::InvalidConfig("penalties must be positive".into()));
        }
        let horizon_s = cfg.horizon_s.unwrap_or(model.step_s);
        if !(horizon_s > 0.0) {
            return Err(Error::InvalidConfig(
                "prediction horizon must be positive".into(),
            ));
        }
        Ok(Self {
            rotation: quat_to_rot(&q),
            omega: Vec3::from(cfg.initial_omega_rad_s),
            prediction_penalty: Mat3::identity() * cfg.prediction_penalty,
            correction_penalty: Mat3::identity() * cfg.correction_penalty,
            horizon_s,
            first_order_term: cfg.first_order_term,
            residual_moment: Mat6::zeros(),
            residual_count: 0,
        })
    }

    pub fn record_residual(&mut self, residual: &Measurement) {
        self.residual_moment += residual * residual.transpose();
        self.residual_count += 1;
    }

    pub fn reset_residuals(&mut self) {
        self.residual_moment = Mat6::zeros();
        self.residual_count = 0;
    }

    /// `M = (1/N) Σ (ŷ − y)(ŷ − y)ᵀ`, or `None` before the first sample.
    pub fn residual_covariance(&self) -> Option<Mat6> {
        (self.residual_count > 0).then(|| self.residual_moment / self.residual_count as f64)
    }

    pub fn residual_count(&self) -> usize {
        self.residual_count
    }
}

/// `L¹ = −Ω̂^× (R̂ᵀa)`.
pub fn pf_lie_derivative_1(rotation: &Mat3, omega: &Vec3, a: &Vec3) -> Vec3 {
    -omega.cross(&(rotation.transpose() * a))
}

/// `L² = (Ω̂^×)² ŷ + ŷ^× (𝕀⁻¹((𝕀Ω̂)^×Ω̂ + T) + Gδ)`, `ŷ = R̂ᵀa`.
pub fn pf_lie_derivative_2(
    rotation: &Mat3,
    omega: &Vec3,
    a: &Vec3,
    torque: &Vec3,
    inertia: &InertiaTensor,
    g: &Mat3,
    delta: &Vec3,
) -> Vec3 {
    let y = rotation.transpose() * a;
    let w = hat(omega);
    w * (w * y) + y.cross(&(rigid_body_acceleration(omega, torque, inertia) + g * delta))
}

/// Building blocks of the correction problem.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionTerms {
    /// `B = Σ y_i^× Λ w_i`.
    pub b: Mat3,
    /// `γ = Σ y_i^× ŷ_i + Σ y_i^× ζ_i`.
    pub gamma: Vec3,
}

/// Predicted output drift `ζ` over horizon `hp`, without the model-error part.
pub fn output_drift(state: &PfState, a: &Vec3, torque: &Vec3, model: &FilterModel) -> Vec3 {
    let hp = state.horizon_s;
    let second = pf_lie_derivative_2(
        &state.rotation,
        &state.omega,
        a,
        torque,
        &model.inertia,
        &model.disturbance_gain,
        &Vec3::zeros(),
    );
    let mut zeta = second * (0.5 * hp * hp);
    if state.first_order_term {
        zeta += pf_lie_derivative_1(&state.rotation, &state.omega, a) * hp;
    }
    zeta
}

pub fn correction_terms(
    state: &PfState,
    y: &Measurement,
    torque: &Vec3,
    model: &FilterModel,
) -> CorrectionTerms {
    let hp = state.horizon_s;
    let lambda = 0.5 * hp * hp;
    let y = split(y);
    let mut b = Mat3::zeros();
    let mut gamma = Vec3::zeros();
    for (i, a) in model.references.iter().enumerate() {
        let y_hat = state.rotation.transpose() * a;
        let w = hat(&y_hat) * model.disturbance_gain;
        let yx = hat(&y[i]);
        b += yx * w * lambda;
        gamma += yx * (y_hat + output_drift(state, a, torque, model));
    }
    CorrectionTerms { b, gamma }
}

/// `δ* = −½ (BᵀQ⁻ᵀB + Σᵀ)⁻¹ Bᵀ (Q⁻¹ + Q⁻ᵀ) γ`.
pub fn optimal_correction(terms: &CorrectionTerms, q: &Mat3, sigma: &Mat3) -> Result<Vec3> {
    let q_inv = q.try_inverse().ok_or(Error::SingularPenalty)?;
    let lhs = terms.b.transpose() * q_inv.transpose() * terms.b + sigma.transpose();
    let rhs = terms.b.transpose() * (q_inv + q_inv.transpose()) * terms.gamma;
    let solved = lhs.lu().solve(&rhs).ok_or(Error::SingularPenalty)?;
    if !solved.iter().all(|x| x.is_finite()) {
        return Err(Error::SingularPenalty);
    }
    Ok(solved * -0.5)
}

pub fn pf_correction(
    state: &PfState,
    y: &Measurement,
    torque: &Vec3,
    model: &FilterModel,
) -> Result<Vec3> {
    let terms = correction_terms(state, y, torque, model);
    optimal_correction(&terms, &state.prediction_penalty, &state.correction_penalty)
}

/// One filter step; `y` is the measurement at the end of the step.
pub fn pf_step(
    state: &PfState,
    y: &Measurement,
    torque: &Vec3,
    model: &FilterModel,
) -> Result<(PfState, Vec3)> {
    let h = model.step_s;
    let delta = pf_correction(state, y, torque, model)?;
    let rotation = state.rotation * exp_so3(&(state.omega * h));
    let impulse = torque + model.inertia.matrix() * (model.disturbance_gain * delta);
    let omega = step_rate(&state.omega, &impulse, &model.inertia, h, &model.newton)?;
    let mut next = PfState {
        rotation,
        omega,
        ..state.clone()
    };
    next.record_residual(&(predicted_output(&rotation, &model.references) - y));
    Ok((next, delta))
}

/// `σ* = trace(M)/6`.
pub fn sigma_star(m: &Mat6) -> f64 {
    m.trace() / 6.0
}

/// Sample second moment of a residual sequence.
pub fn residual_moment(residuals: &[Measurement]) -> Option<Mat6> {
    if residuals.is_empty() {
        return None;
    }
    let sum = residuals
        .iter()
        .fold(Mat6::zeros(), |acc, r| acc + r * r.transpose());
    Some(sum / residuals.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningRule {
    /// Multiplicative adjustment per tuning round.
    pub factor: f64,
    /// Relative band around the target inside which `Σ` is kept.
    pub dead_band: f64,
}

impl Default for TuningRule {
    fn default() -> Self {
        Self {
            factor: 1.1,
            dead_band: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TuningMove {
    Decrease,
    Increase,
    Keep,
}

pub fn tuning_move(sigma_star: f64, target: f64, rule: &TuningRule) -> TuningMove {
    if sigma_star < target * (1.0 - rule.dead_band) {
        TuningMove::Decrease
    } else if sigma_star > target * (1.0 + rule.dead_band) {
        TuningMove::Increase
    } else {
        TuningMove::Keep
    }
}

/// Adjusts `Σ` from a residual sequence: down when `σ*` is below the target,
/// up when above, unchanged inside the dead band.
pub fn pf_tune_sigma(
    residuals: &[Measurement],
    target: f64,
    sigma: &Mat3,
    rule: &TuningRule,
) -> Mat3 {
    let Some(m) = residual_moment(residuals) else {
        return *sigma;
    };
    match tuning_move(sigma_star(&m), target, rule) {
        TuningMove::Decrease => sigma / rule.factor,
        TuningMove::Increase => sigma * rule.factor,
        TuningMove::Keep => *sigma,
    }
}

pub struct Pf {
    pub state: PfState,
    model: FilterModel,
    last_correction: Vec3,
    /// Torques between the internal state's time and the present, oldest first.
    torques: VecDeque<Vec3>,
    lag_steps: usize,
    reported: (Mat3, Vec3),
}

impl Pf {
    pub fn new(cfg: &PfConfig, model: FilterModel) -> Result<Self> {
        let state = PfState::new(cfg, &model)?;
        let lag_steps = if cfg.lead_compensation {
            ((state.horizon_s - model.step_s) / model.step_s)
                .round()
                .max(0.0) as usize
        } else {
            0
        };
        Ok(Self {
            reported: (state.rotation, state.omega),
            state,
            model,
            last_correction: Vec3::zeros(),
            torques: VecDeque::with_capacity(lag_steps + 1),
            lag_steps,
        })
    }

    /// Internal state propagated through the buffered torques.
    fn lead(&self) -> Result<(Mat3, Vec3)> {
        let h = self.model.step_s;
        let (mut r, mut w) = (self.state.rotation, self.state.omega);
        for t in &self.torques {
            r *= exp_so3(&(w * h));
            w = step_rate(&w, t, &self.model.inertia, h, &self.model.newton)?;
        }
        Ok((r, w))
    }
}

impl AttitudeFilter for Pf {
    fn kind(&self) -> FilterKind {
        FilterKind::Pf
    }

    fn step(&mut self, input: &StepInput<'_>) -> Result<()> {
        if self.torques.is_empty() {
            // Torque before the first sample is unknown; hold the first one.
            self.torques
                .extend(std::iter::repeat_n(input.torque, self.lag_steps));
        }
        self.torques.push_back(input.torque);
        let torque = self
            .torques
            .pop_front()
            .expect("buffer holds at least the current torque");
        let (next, delta) = pf_step(&self.state, input.y_next, &torque, &self.model)?;
        self.state = next;
        self.last_correction = delta;
        self.reported = self.lead()?;
        Ok(())
    }

    fn rotation(&self) -> Mat3 {
        self.reported.0
    }

    fn omega(&self) -> Vec3 {
        self.reported.1
    }

    fn group_error(&self) -> f64 {
        orthogonality_error(&self.state.rotation)
            .max((self.state.rotation.determinant() - 1.0).abs())
    }

    fn diagnostic_names(&self) -> &'static [&'static str] {
        &["correction_norm"]
    }

    fn diagnostics(&self) -> Vec<f64> {
        vec![self.last_correction.norm()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::NewtonSolverConfig;
    use crate::so3::rod;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn model() -> FilterModel {
        FilterModel {
            inertia: InertiaTensor::diagonal(6.0, 7.0, 9.0).unwrap(),
            step_s: 1e-3,
            newton: NewtonSolverConfig::default(),
            references: [Vec3::x(), Vec3::y()],
            noise_scales: [0.342, 0.342],
            disturbance_gain: Mat3::identity(),
        }
    }

    fn random_state(rng: &mut ChaCha8Rng, m: &FilterModel) -> PfState {
        let mut s = PfState::new(&PfConfig::default(), m).unwrap();
        s.rotation = rod(
            rng.random_range(0.1..3.0),
            &Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
        )
        .unwrap();
        s.omega = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        s
    }

    #[test]
    fn lie_derivative_examples() {
        let r = rod(0.7, &Vec3::new(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(
            pf_lie_derivative_1(&r, &Vec3::zeros(), &Vec3::x()),
            Vec3::zeros()
        );
        let spin = pf_lie_derivative_1(&Mat3::identity(), &Vec3::new(0.0, 0.0, 2.0), &Vec3::z());
        assert_eq!(spin, Vec3::zeros());
        let m = model();
        let z = Vec3::zeros();
        assert_eq!(
            pf_lie_derivative_2(&r, &z, &Vec3::x(), &z, &m.inertia, &m.disturbance_gain, &z),
            z
        );
    }

    #[test]
    fn second_derivative_is_affine_in_delta() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let s = random_state(&mut rng, &m);
        let t = Vec3::new(0.3, -0.1, 0.2);
        let a = Vec3::x();
        let base = pf_lie_derivative_2(
            &s.rotation,
            &s.omega,
            &a,
            &t,
            &m.inertia,
            &m.disturbance_gain,
            &Vec3::zeros(),
        );
        let w = hat(&(s.rotation.transpose() * a)) * m.disturbance_gain;
        for j in 0..3 {
            let mut d = Vec3::zeros();
            d[j] = 1.0;
            let col = pf_lie_derivative_2(
                &s.rotation,
                &s.omega,
                &a,
                &t,
                &m.inertia,
                &m.disturbance_gain,
                &d,
            ) - base;
            assert!((col - w.column(j)).amax() < 1e-14);
        }
    }

    #[test]
    fn perfect_tracking_needs_no_correction() {
        let m = model();
        let mut s = PfState::new(&PfConfig::default(), &m).unwrap();
        s.rotation = rod(0.8, &Vec3::new(1.0, 1.0, 0.0)).unwrap();
        let y = predicted_output(&s.rotation, &m.references);
        // Zero rate and torque make ζ vanish.
        let delta = pf_correction(&s, &y, &Vec3::zeros(), &m).unwrap();
        assert_eq!(delta, Vec3::zeros());
    }

    #[test]
    fn correction_minimizes_the_quadratic_cost() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..50 {
            let mut s = random_state(&mut rng, &m);
            s.horizon_s = rng.random_range(1e-3..0.3);
            let root = Mat3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            s.prediction_penalty = root * root.transpose() + Mat3::identity() * 0.1;
            s.correction_penalty = Mat3::identity() * rng.random_range(1e-4..1e-1);
            let y = Measurement::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let t = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let terms = correction_terms(&s, &y, &t, &m);
            let delta =
                optimal_correction(&terms, &s.prediction_penalty, &s.correction_penalty).unwrap();
            // Normal equations of ½(γ + Bδ)ᵀQ⁻¹(γ + Bδ) + ½δᵀΣδ, solved independently.
            let qi = s.prediction_penalty.try_inverse().unwrap();
            let hess = terms.b.transpose() * qi * terms.b + s.correction_penalty;
            let direct = -hess
                .cholesky()
                .unwrap()
                .solve(&(terms.b.transpose() * qi * terms.gamma));
            assert!((delta - direct).norm() <= 1e-9 * direct.norm().max(1e-12));
        }
    }

    #[test]
    fn infinite_penalty_limit() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let mut s = random_state(&mut rng, &m);
        s.horizon_s = 0.1;
        let y = Measurement::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let mut last = f64::INFINITY;
        for k in 0..12 {
            s.correction_penalty = Mat3::identity() * 10f64.powi(k - 6);
            let n = pf_correction(&s, &y, &Vec3::zeros(), &m).unwrap().norm();
            assert!(n <= last);
            last = n;
        }
        assert!(last < 1e-4);
    }

    #[test]
    fn correction_is_invariant_under_reciprocal_penalty_scaling() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let mut s = random_state(&mut rng, &m);
        s.horizon_s = 0.05;
        let y = Measurement::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let base = pf_correction(&s, &y, &Vec3::zeros(), &m).unwrap();
        for c in [0.01, 3.0, 250.0] {
            let mut scaled = s.clone();
            scaled.prediction_penalty *= c;
            scaled.correction_penalty /= c;
            let d = pf_correction(&scaled, &y, &Vec3::zeros(), &m).unwrap();
            assert!((d - base).norm() <= 1e-10 * base.norm());
        }
    }

    #[test]
    fn zero_correction_stream_is_pure_propagation() {
        let m = model();
        let mut s = PfState::new(&PfConfig::default(), &m).unwrap();
        s.omega = Vec3::new(0.2, 0.4, 0.5);
        s.correction_penalty = Mat3::identity() * 1e300;
        let mut r = s.rotation;
        let mut w = s.omega;
        let torque = Vec3::new(0.1, 0.0, -0.1);
        for _ in 0..100 {
            let y = predicted_output(&r, &m.references);
            let (next, delta) = pf_step(&s, &y, &torque, &m).unwrap();
            assert!(delta.norm() < 1e-200);
            r *= exp_so3(&(w * m.step_s));
            w = step_rate(&w, &torque, &m.inertia, m.step_s, &m.newton).unwrap();
            assert_eq!(next.rotation, r);
            assert_eq!(next.omega, w);
            s = next;
        }
    }

    #[test]
    fn step_composes_its_parts() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let s = random_state(&mut rng, &m);
        let y = Measurement::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let t = Vec3::new(0.2, 0.1, -0.3);
        let delta = pf_correction(&s, &y, &t, &m).unwrap();
        let (next, d) = pf_step(&s, &y, &t, &m).unwrap();
        assert_eq!(d, delta);
        assert_eq!(next.rotation, s.rotation * exp_so3(&(s.omega * m.step_s)));
        let w = step_rate(
            &s.omega,
            &(t + m.inertia.matrix() * delta),
            &m.inertia,
            m.step_s,
            &m.newton,
        )
        .unwrap();
        assert_eq!(next.omega, w);
        assert_eq!(next.residual_count(), 1);
    }

    #[test]
    fn sigma_star_moment_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(65);
        let v: f64 = 0.09;
        let residuals: Vec<Measurement> = (0..200_000)
            .map(|_| {
                Measurement::from_fn(|_, _| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v.sqrt() * z
                })
            })
            .collect();
        let s = sigma_star(&residual_moment(&residuals).unwrap());
        assert!((s / v - 1.0).abs() < 0.01);
    }

    #[test]
    fn tuning_directions() {
        let rule = TuningRule::default();
        let sigma = Mat3::identity() * 5e-3;
        // M = σ_ε I exactly: residuals with unit entries on one axis at a time.
        let target: f64 = 0.25;
        let residuals: Vec<Measurement> = (0..6)
            .map(|i| Measurement::from_fn(|j, _| if i == j { (6.0 * target).sqrt() } else { 0.0 }))
            .collect();
        assert_eq!(pf_tune_sigma(&residuals, target, &sigma, &rule), sigma);
        let up = pf_tune_sigma(&residuals, 0.5 * target, &sigma, &rule);
        assert!((up - sigma * 1.1).amax() < 1e-18);
        let down = pf_tune_sigma(&residuals, 2.0 * target, &sigma, &rule);
        assert!((down - sigma / 1.1).amax() < 1e-18);
        assert_eq!(pf_tune_sigma(&[], target, &sigma, &rule), sigma);
    }

    #[test]
    fn lead_compensation_reports_internal_state_ahead_by_the_lag() {
        let m = model();
        let cfg = PfConfig {
            initial_omega_rad_s: [0.0, 0.0, 0.8],
            correction_penalty: 1e300,
            ..Default::default()
        };
        let mut lagged = Pf::new(
            &PfConfig {
                lead_compensation: false,
                ..cfg.clone()
            },
            m.clone(),
        )
        .unwrap();
        let mut led = Pf::new(&cfg, m.clone()).unwrap();
        let y = predicted_output(&Mat3::identity(), &m.references);
        let input = StepInput {
            time_s: 0.0,
            torque: Vec3::zeros(),
            y_now: &y,
            y_next: &y,
        };
        lagged.step(&input).unwrap();
        led.step(&input).unwrap();
        assert_eq!(lagged.rotation(), lagged.state.rotation);
        assert_eq!(led.state.rotation, lagged.state.rotation);
        // Spin about a principal axis with no torque is a fixed point of the rate flow.
        // One step of internal progress plus the lag.
        let expected = exp_so3(&(Vec3::new(0.0, 0.0, 0.8) * DEFAULT_HORIZON_S));
        assert!((led.rotation() - expected).amax() < 1e-13);
        assert!((led.omega() - Vec3::new(0.0, 0.0, 0.8)).amax() < 1e-13);
        let mut one_step = Pf::new(
            &PfConfig {
                horizon_s: None,
                ..cfg
            },
            m,
        )
        .unwrap();
        one_step.step(&input).unwrap();
        assert_eq!(one_step.rotation(), one_step.state.rotation);
    }
}
