//! Truth model: torque profiles, model-error signals, vector measurements and
//! the error metrics used to score estimators.

use nalgebra::SVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{
    rigid_body_acceleration, step_rigid_body, InertiaTensor, NewtonSolverConfig, RigidBodyState,
};
use crate::so3::{rod_q, Mat3, UnitQuaternion, Vec3};

/// Stacked pair of body-frame direction measurements.
pub type Measurement = SVector<f64, 6>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Waveform {
    Sin,
    Cos,
}

/// Three independent sinusoids, `sign · amplitude · wave(ω t)` per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinusoidTriplet {
    pub amplitude: [f64; 3],
    pub angular_frequency_rad_s: [f64; 3],
    pub sign: [f64; 3],
    pub waveform: [Waveform; 3],
}

impl SinusoidTriplet {
    pub fn eval(&self, t: f64) -> Vec3 {
        Vec3::from_fn(|i, _| {
            let phase = self.angular_frequency_rad_s[i] * t;
            let wave = match self.waveform[i] {
                Waveform::Sin => phase.sin(),
                Waveform::Cos => phase.cos(),
            };
            self.sign[i] * self.amplitude[i] * wave
        })
    }

    /// Distinct frequencies in Hz.
    pub fn frequencies_hz(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for w in self.angular_frequency_rad_s {
            let f = w / (2.0 * std::f64::consts::PI);
            if !out.iter().any(|g| (g - f).abs() < 1e-12) {
                out.push(f);
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        let ok = self
            .angular_frequency_rad_s
            .iter()
            .chain(&self.amplitude)
            .chain(&self.sign)
            .all(|x| x.is_finite())
            && self.angular_frequency_rad_s.iter().all(|w| *w >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "sinusoid frequencies must be finite and non-negative".into(),
            ))
        }
    }
}

/// Applied torque in N·m, known to every filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TorqueProfile {
    Zero,
    Constant { torque_n_m: [f64; 3] },
    SinusoidTriplet(SinusoidTriplet),
}

impl TorqueProfile {
    pub fn eval(&self, t: f64) -> Vec3 {
        match self {
            TorqueProfile::Zero => Vec3::zeros(),
            TorqueProfile::Constant { torque_n_m } => Vec3::from(*torque_n_m),
            TorqueProfile::SinusoidTriplet(s) => s.eval(t),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TorqueProfile::SinusoidTriplet(s) => s.validate(),
            TorqueProfile::Constant { torque_n_m } if !torque_n_m.iter().all(|x| x.is_finite()) => {
                Err(Error::InvalidConfig("torque must be finite".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Unknown disturbance `δ` entering the rate dynamics through `G`.
///
/// Gaussian samples are drawn once per step and held over the step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelErrorSignal {
    Zero,
    GaussianWhite { std_rad_s2: f64, seed: u64 },
    DeterministicSinusoid(SinusoidTriplet),
}

impl ModelErrorSignal {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelErrorSignal::GaussianWhite { std_rad_s2, .. } if !(*std_rad_s2 >= 0.0) => Err(
                Error::InvalidConfig("model-error std must be non-negative".into()),
            ),
            ModelErrorSignal::DeterministicSinusoid(s) => s.validate(),
            _ => Ok(()),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        !matches!(self, ModelErrorSignal::GaussianWhite { .. })
    }

    /// Per-step standard deviation, zero for deterministic signals.
    pub fn noise_std(&self) -> f64 {
        match self {
            ModelErrorSignal::GaussianWhite { std_rad_s2, .. } => *std_rad_s2,
            _ => 0.0,
        }
    }

    fn sampler(&self) -> DisturbanceSampler<'_> {
        let rng = match self {
            ModelErrorSignal::GaussianWhite { seed, .. } => Some(ChaCha8Rng::seed_from_u64(*seed)),
            _ => None,
        };
        DisturbanceSampler { signal: self, rng }
    }
}

struct DisturbanceSampler<'a> {
    signal: &'a ModelErrorSignal,
    rng: Option<ChaCha8Rng>,
}

impl DisturbanceSampler<'_> {
    fn sample(&mut self, t: f64) -> Vec3 {
        match (self.signal, self.rng.as_mut()) {
            (ModelErrorSignal::GaussianWhite { std_rad_s2, .. }, Some(rng)) => {
                Vec3::from_fn(|_, _| {
                    let z: f64 = StandardNormal.sample(rng);
                    std_rad_s2 * z
                })
            }
            (ModelErrorSignal::DeterministicSinusoid(s), _) => s.eval(t),
            _ => Vec3::zeros(),
        }
    }
}

/// Two constant inertial directions observed in the body frame with additive
/// Gaussian noise `d_i ε_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementModel {
    pub a1: [f64; 3],
    pub a2: [f64; 3],
    /// Per-component noise standard deviation of each direction (dimensionless).
    pub d1: f64,
    pub d2: f64,
    pub seed: u64,
}

impl MeasurementModel {
    pub fn references(&self) -> [Vec3; 2] {
        [Vec3::from(self.a1), Vec3::from(self.a2)]
    }

    pub fn scales(&self) -> [f64; 2] {
        [self.d1, self.d2]
    }

    pub fn validate(&self) -> Result<()> {
        for a in self.references() {
            if (a.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(
                    "reference directions must be unit vectors".into(),
                ));
            }
        }
        if !(self.d1 >= 0.0 && self.d2 >= 0.0) {
            return Err(Error::InvalidConfig(
                "noise scales must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// A fresh noise stream seeded from `seed`.
    pub fn noise_stream(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Noise-free predicted output `[Rᵀa₁; Rᵀa₂]`.
pub fn predicted_output(r: &Mat3, references: &[Vec3; 2]) -> Measurement {
    let y1 = r.transpose() * references[0];
    let y2 = r.transpose() * references[1];
    Measurement::from_fn(|i, _| if i < 3 { y1[i] } else { y2[i - 3] })
}

/// Splits a stacked measurement into its two directions.
pub fn split(y: &Measurement) -> [Vec3; 2] {
    [Vec3::new(y[0], y[1], y[2]), Vec3::new(y[3], y[4], y[5])]
}

/// `y_i = Rᵀa_i + d_i ε_i`, drawing six standard normals from `rng`.
pub fn measure(
    state: &RigidBodyState,
    model: &MeasurementModel,
    rng: &mut ChaCha8Rng,
) -> Measurement {
    let clean = predicted_output(&state.rotation(), &model.references());
    let scales = model.scales();
    Measurement::from_fn(|i, _| {
        let z: f64 = StandardNormal.sample(rng);
        clean[i] + scales[i / 3] * z
    })
}

/// Measurements at every grid point of a trajectory, from one noise stream.
pub fn measurement_stream(
    trajectory: &TruthTrajectory,
    model: &MeasurementModel,
) -> Vec<Measurement> {
    let mut rng = model.noise_stream();
    trajectory
        .states
        .iter()
        .map(|s| measure(s, model, &mut rng))
        .collect()
}

/// `Ω̇ = 𝕀⁻¹((𝕀Ω)^×Ω + T) + Gδ`.
pub fn euler_rhs(
    omega: &Vec3,
    torque: &Vec3,
    inertia: &InertiaTensor,
    g: &Mat3,
    delta: &Vec3,
) -> Vec3 {
    rigid_body_acceleration(omega, torque, inertia) + g * delta
}

/// Everything needed to propagate the true body.
#[derive(Debug, Clone)]
pub struct TruthModel {
    pub inertia: InertiaTensor,
    pub torque: TorqueProfile,
    pub model_error: ModelErrorSignal,
    pub disturbance_gain: Mat3,
    pub newton: NewtonSolverConfig,
}

#[derive(Debug, Clone)]
pub struct TruthTrajectory {
    pub step_s: f64,
    pub times: Vec<f64>,
    /// One more entry than `torques`; `states[k]` is the state at `times[k]`.
    pub states: Vec<RigidBodyState>,
    /// Applied torque held over `[t_k, t_{k+1})`.
    pub torques: Vec<Vec3>,
    /// Model error held over `[t_k, t_{k+1})`.
    pub disturbances: Vec<Vec3>,
}

impl TruthTrajectory {
    pub fn steps(&self) -> usize {
        self.torques.len()
    }
}

/// Propagates `initial` for `steps` steps of size `h`.
///
/// The disturbance enters as the impulse `U_k = T(t_k) + 𝕀 G δ_k`.
pub fn simulate_truth(
    model: &TruthModel,
    initial: &RigidBodyState,
    step_s: f64,
    steps: usize,
) -> Result<TruthTrajectory> {
    let mut sampler = model.model_error.sampler();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut torques = Vec::with_capacity(steps);
    let mut disturbances = Vec::with_capacity(steps);
    let mut state = *initial;
    times.push(0.0);
    states.push(state);
    for k in 0..steps {
        let t = k as f64 * step_s;
        let torque = model.torque.eval(t);
        let delta = sampler.sample(t);
        let u = torque + model.inertia.matrix() * (model.disturbance_gain * delta);
        state = step_rigid_body(&state, &u, &model.inertia, step_s, &model.newton)?;
        torques.push(torque);
        disturbances.push(delta);
        times.push((k + 1) as f64 * step_s);
        states.push(state);
    }
    Ok(TruthTrajectory {
        step_s,
        times,
        states,
        torques,
        disturbances,
    })
}

/// `e_R = acos(1 − tr(I − R_trueᵀ R_est)/2)`, in `[0, π]`.
pub fn error_attitude(r_true: &Mat3, r_est: &Mat3) -> f64 {
    let arg = 1.0 - (Mat3::identity() - r_true.transpose() * r_est).trace() / 2.0;
    arg.clamp(-1.0, 1.0).acos()
}

pub fn error_attitude_q(q_true: &UnitQuaternion, q_est: &UnitQuaternion) -> f64 {
    error_attitude(&rod_q(q_true), &rod_q(q_est))
}

/// Rate error with both rates rotated to the inertial frame by their own attitude.
pub fn error_rate(omega_true: &Vec3, omega_est: &Vec3, r_true: &Mat3, r_est: &Mat3) -> Vec3 {
    r_est * omega_est - r_true * omega_true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::{quat_to_rot, rod};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn model(error: ModelErrorSignal) -> TruthModel {
        TruthModel {
            inertia: InertiaTensor::diagonal(6.0, 7.0, 9.0).unwrap(),
            torque: TorqueProfile::SinusoidTriplet(SinusoidTriplet {
                amplitude: [1.0; 3],
                angular_frequency_rad_s: [2.0 * PI / 3.0, 2.0 * PI, 2.0 * PI / 5.0],
                sign: [1.0, -1.0, 1.0],
                waveform: [Waveform::Sin, Waveform::Sin, Waveform::Cos],
            }),
            model_error: error,
            disturbance_gain: Mat3::identity(),
            newton: NewtonSolverConfig::default(),
        }
    }

    fn measurement_model(d: f64, seed: u64) -> MeasurementModel {
        MeasurementModel {
            a1: [1.0, 0.0, 0.0],
            a2: [0.0, 1.0, 0.0],
            d1: d,
            d2: d,
            seed,
        }
    }

    #[test]
    fn euler_rhs_examples() {
        let inertia = InertiaTensor::diagonal(6.0, 7.0, 9.0).unwrap();
        let g = Mat3::identity();
        let z = Vec3::zeros();
        assert_eq!(euler_rhs(&z, &z, &inertia, &g, &z), z);
        assert_eq!(
            euler_rhs(&Vec3::new(0.0, 3.0, 0.0), &z, &inertia, &g, &z),
            z
        );

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let w = Vec3::from_fn(|_, _| rng.random_range(-2.0..2.0));
            let t = Vec3::from_fn(|_, _| rng.random_range(-2.0..2.0));
            let d = Vec3::from_fn(|_, _| rng.random_range(-2.0..2.0));
            let (i1, i2, i3) = (6.0, 7.0, 9.0);
            // (𝕀Ω)×Ω written out component by component
            let gyro = Vec3::new(
                (i2 - i3) * w.y * w.z,
                (i3 - i1) * w.z * w.x,
                (i1 - i2) * w.x * w.y,
            );
            let expected = Vec3::new(
                (gyro.x + t.x) / i1 + d.x,
                (gyro.y + t.y) / i2 + d.y,
                (gyro.z + t.z) / i3 + d.z,
            );
            assert_relative_eq!(
                euler_rhs(&w, &t, &inertia, &g, &d),
                expected,
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn trivial_trajectory_is_constant() {
        let mut m = model(ModelErrorSignal::Zero);
        m.torque = TorqueProfile::Zero;
        let initial = RigidBodyState {
            attitude: UnitQuaternion::identity(),
            omega: Vec3::zeros(),
        };
        let traj = simulate_truth(&m, &initial, 1e-3, 500).unwrap();
        assert!(traj.states.iter().all(|s| *s == initial));
    }

    #[test]
    fn case1_initial_state() {
        let q0 = UnitQuaternion::from_axis_angle(1.2, &Vec3::new(1.0, 1.0, 1.0)).unwrap();
        let expected = [0.8253, 0.3260, 0.3260, 0.3260];
        for (got, want) in q0.to_vec4().iter().zip(expected) {
            assert!((got - want).abs() < 5e-5);
        }
        let initial = RigidBodyState {
            attitude: q0,
            omega: Vec3::new(0.2, 0.4, 0.5),
        };
        let traj = simulate_truth(&model(ModelErrorSignal::Zero), &initial, 1e-3, 10).unwrap();
        assert_eq!(traj.states[0], initial);
        assert_eq!(traj.times.len(), 11);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let m = model(ModelErrorSignal::GaussianWhite {
            std_rad_s2: 0.1,
            seed: 11,
        });
        let initial = RigidBodyState {
            attitude: UnitQuaternion::identity(),
            omega: Vec3::new(0.2, 0.4, 0.5),
        };
        let a = simulate_truth(&m, &initial, 1e-3, 2000).unwrap();
        let b = simulate_truth(&m, &initial, 1e-3, 2000).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.disturbances, b.disturbances);
    }

    #[test]
    fn measurement_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mm = measurement_model(0.0, 0);
        let id = RigidBodyState {
            attitude: UnitQuaternion::identity(),
            omega: Vec3::zeros(),
        };
        let y = measure(&id, &mm, &mut rng);
        assert_eq!(split(&y)[0], Vec3::x());

        let quarter = RigidBodyState {
            attitude: UnitQuaternion::from_axis_angle(FRAC_PI_2, &Vec3::z()).unwrap(),
            omega: Vec3::zeros(),
        };
        let y = measure(&quarter, &mm, &mut rng);
        assert_relative_eq!(split(&y)[0], Vec3::new(0.0, -1.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn measurement_noise_moments() {
        let d = 0.342;
        let mm = measurement_model(d, 21);
        let mut rng = mm.noise_stream();
        let state = RigidBodyState {
            attitude: UnitQuaternion::from_axis_angle(0.7, &Vec3::new(1.0, -2.0, 0.5)).unwrap(),
            omega: Vec3::zeros(),
        };
        let clean = split(&predicted_output(&state.rotation(), &mm.references()))[0];
        let n = 100_000;
        let mut cov = Mat3::zeros();
        let mut mean = Vec3::zeros();
        for _ in 0..n {
            let e = split(&measure(&state, &mm, &mut rng))[0] - clean;
            mean += e;
            cov += e * e.transpose();
        }
        mean /= n as f64;
        cov = cov / n as f64 - mean * mean.transpose();
        let target = d * d;
        for i in 0..3 {
            assert!((cov[(i, i)] / target - 1.0).abs() < 0.03);
            for j in 0..3 {
                if i != j {
                    assert!(cov[(i, j)].abs() < 0.03 * target);
                }
            }
        }
    }

    #[test]
    fn noise_streams_are_independent() {
        let initial = RigidBodyState {
            attitude: UnitQuaternion::identity(),
            omega: Vec3::new(0.2, 0.4, 0.5),
        };
        let process = |seed| {
            simulate_truth(
                &model(ModelErrorSignal::GaussianWhite {
                    std_rad_s2: 0.1,
                    seed,
                }),
                &initial,
                1e-3,
                300,
            )
            .unwrap()
        };
        let a = process(1);
        let b = process(2);
        let m1 = measurement_model(0.3, 5);
        let noise = |traj: &TruthTrajectory| {
            let clean: Vec<_> = traj
                .states
                .iter()
                .map(|s| predicted_output(&s.rotation(), &m1.references()))
                .collect();
            measurement_stream(traj, &m1)
                .iter()
                .zip(clean)
                .map(|(y, c)| y - c)
                .collect::<Vec<_>>()
        };
        // Changing the process seed leaves the measurement noise untouched.
        let (na, nb) = (noise(&a), noise(&b));
        for (x, y) in na.iter().zip(&nb) {
            assert!((x - y).amax() < 1e-14);
        }
        // Changing the measurement seed leaves the truth untouched.
        let mut m2 = m1.clone();
        m2.seed = 6;
        let _ = measurement_stream(&a, &m2);
        assert_eq!(process(1).states, a.states);
    }

    #[test]
    fn attitude_error_examples() {
        let r = rod(0.4, &Vec3::new(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(error_attitude(&r, &r), 0.0);
        for &theta in &[0.1, 1.0, 2.0, 3.0] {
            let e = error_attitude(
                &Mat3::identity(),
                &rod(theta, &Vec3::new(0.3, -1.0, 2.0)).unwrap(),
            );
            assert!((e - theta).abs() < 1e-7);
        }
        assert_relative_eq!(
            error_attitude(&Mat3::identity(), &rod(PI, &Vec3::z()).unwrap()),
            PI
        );
    }

    #[test]
    fn rate_error_examples() {
        let r = rod(0.4, &Vec3::new(1.0, 2.0, 3.0)).unwrap();
        let w = Vec3::new(0.1, 0.2, 0.3);
        assert_eq!(error_rate(&w, &w, &r, &r), Vec3::zeros());
        let v = Vec3::new(0.3, 0.2, 0.1);
        assert_eq!(
            error_rate(&w, &v, &Mat3::identity(), &Mat3::identity()),
            v - w
        );
    }

    fn rotation() -> impl Strategy<Value = Mat3> {
        (prop::array::uniform3(-1.0f64..1.0), 0.01f64..3.1)
            .prop_map(|(axis, angle)| rod(angle, &Vec3::from(axis).add_scalar(1e-3)).unwrap())
    }

    proptest! {
        #[test]
        fn attitude_error_is_symmetric_and_bi_invariant(a in rotation(), b in rotation(), c in rotation()) {
            let e = error_attitude(&a, &b);
            prop_assert!((e - error_attitude(&b, &a)).abs() < 1e-7);
            prop_assert!((e - error_attitude(&(c * a), &(c * b))).abs() < 1e-7);
            prop_assert!((0.0..=PI).contains(&e));
        }

        #[test]
        fn rate_error_norm_is_left_invariant(a in rotation(), b in rotation(), c in rotation(),
                                             w in prop::array::uniform3(-1.0f64..1.0),
                                             v in prop::array::uniform3(-1.0f64..1.0)) {
            let (w, v) = (Vec3::from(w), Vec3::from(v));
            let lhs = error_rate(&w, &v, &a, &b).norm();
            let rhs = error_rate(&w, &v, &(c * a), &(c * b)).norm();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn quaternion_and_matrix_errors_agree_along_a_trajectory() {
        let initial = RigidBodyState {
            attitude: UnitQuaternion::from_axis_angle(1.2, &Vec3::new(1.0, 1.0, 1.0)).unwrap(),
            omega: Vec3::new(0.2, 0.4, 0.5),
        };
        let traj = simulate_truth(&model(ModelErrorSignal::Zero), &initial, 1e-3, 5000).unwrap();
        let est = UnitQuaternion::from_axis_angle(0.3, &Vec3::new(0.0, 1.0, -1.0)).unwrap();
        for s in traj.states.iter().step_by(50) {
            let eq = error_attitude_q(&s.attitude, &(s.attitude * est));
            let er = error_attitude(&quat_to_rot(&s.attitude), &quat_to_rot(&(s.attitude * est)));
            assert!((eq - er).abs() < 1e-9);
        }
    }
}
