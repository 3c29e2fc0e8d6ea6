//! Fast executable property checks with measured margins.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::filters::bias::{log_space, pooled_remainder_slope, remainder_slope};
use crate::filters::ekf::{
    output, output_jacobian, transition, transition_jacobian, GaussianFilterConfig,
    GaussianFilterState,
};
use crate::filters::pf::{pf_lie_derivative_1, pf_lie_derivative_2};
use crate::filters::ukf::{propagate, sigma_points, time_update, UtParams};
use crate::filters::{FilterModel, Mat7, Vec7};
use crate::integrator::{
    c_exp, explicit_euler_step, rigid_body_acceleration, step_rigid_body, InertiaTensor,
    NewtonSolverConfig, RigidBodyState,
};
use crate::so3::{hat, quat_normalize, rod, Mat3, UnitQuaternion, Vec3, Vec4};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    /// Bound the measured value is compared with.
    pub threshold: f64,
    pub detail: String,
}

impl CheckEntry {
    fn at_most(name: &str, measured: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: measured <= threshold,
            measured,
            threshold,
            detail: detail.into(),
        }
    }

    fn above(name: &str, measured: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: measured > threshold,
            measured,
            threshold,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: measured {:.3e}, bound {:.3e}{}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.threshold,
            if self.detail.is_empty() {
                String::new()
            } else {
                format!(" ({})", self.detail)
            }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub entries: Vec<CheckEntry>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }
}

/// Worst relative drifts over a torque-free run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conservation {
    pub energy: f64,
    /// `R 𝕀 Ω`.
    pub spatial_momentum: f64,
    /// `R C(−hΩ) 𝕀 Ω`, the momentum the scheme carries exactly up to `O(h⁵)`.
    pub discrete_momentum: f64,
    pub explicit_euler_energy: f64,
}

pub fn uav_inertia() -> InertiaTensor {
    InertiaTensor::diagonal(6.0, 7.0, 9.0).expect("positive diagonal")
}

pub fn uav_initial_state() -> RigidBodyState {
    RigidBodyState {
        attitude: UnitQuaternion::from_axis_angle(1.2, &Vec3::new(1.0, 1.0, 1.0))
            .expect("non-zero axis"),
        omega: Vec3::new(0.2, 0.4, 0.5),
    }
}

pub fn conservation(
    inertia: &InertiaTensor,
    initial: &RigidBodyState,
    h: f64,
    duration_s: f64,
) -> crate::Result<Conservation> {
    let cfg = NewtonSolverConfig::default();
    let steps = (duration_s / h).round() as usize;
    let discrete =
        |s: &RigidBodyState| s.rotation() * c_exp(&(-s.omega * h)) * inertia.matrix() * s.omega;
    let e0 = inertia.kinetic_energy(&initial.omega);
    let m0 = initial.spatial_momentum(inertia);
    let p0 = discrete(initial);
    let (mut s, mut e) = (*initial, *initial);
    let mut out = Conservation {
        energy: 0.0,
        spatial_momentum: 0.0,
        discrete_momentum: 0.0,
        explicit_euler_energy: 0.0,
    };
    for _ in 0..steps {
        s = step_rigid_body(&s, &Vec3::zeros(), inertia, h, &cfg)?;
        e = explicit_euler_step(&e, &Vec3::zeros(), inertia, h);
        out.energy = out
            .energy
            .max((inertia.kinetic_energy(&s.omega) / e0 - 1.0).abs());
        out.spatial_momentum = out
            .spatial_momentum
            .max((s.spatial_momentum(inertia) - m0).norm() / m0.norm());
        out.discrete_momentum = out
            .discrete_momentum
            .max((discrete(&s) - p0).norm() / p0.norm());
        out.explicit_euler_energy = out
            .explicit_euler_energy
            .max((inertia.kinetic_energy(&e.omega) / e0 - 1.0).abs());
    }
    Ok(out)
}

pub fn uav_filter_model() -> FilterModel {
    FilterModel {
        inertia: uav_inertia(),
        step_s: 1e-3,
        newton: NewtonSolverConfig {
            tolerance: 1e-14,
            max_iterations: 50,
        },
        references: [Vec3::x(), Vec3::y()],
        noise_scales: [20f64.to_radians().sin(); 2],
        disturbance_gain: Mat3::identity(),
    }
}

fn random_unit_quaternion(rng: &mut ChaCha8Rng) -> Vec4 {
    quat_normalize(&Vec4::from_fn(|_, _| rng.random_range(-1.0..1.0)))
        .expect("non-degenerate sample")
        .to_vec4()
}

fn random_vec(rng: &mut ChaCha8Rng, bound: f64) -> Vec3 {
    Vec3::from_fn(|_, _| rng.random_range(-bound..bound))
}

/// Worst relative Frobenius error of `F` and `H` against central differences.
pub fn jacobian_fidelity(samples: usize, seed: u64) -> crate::Result<(f64, f64)> {
    let m = uav_filter_model();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = 1e-6;
    let (mut worst_f, mut worst_h) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let mut x = Vec7::zeros();
        x.fixed_rows_mut::<4>(0)
            .copy_from(&random_unit_quaternion(&mut rng));
        x.fixed_rows_mut::<3>(4)
            .copy_from(&random_vec(&mut rng, 3.0));
        let torque = random_vec(&mut rng, 1.0);
        let next = transition(&x, &torque, &m)?;
        let f = transition_jacobian(&x, &next.fixed_rows::<3>(4).into_owned(), &m);
        let mut fd = Mat7::zeros();
        for j in 0..7 {
            let mut d = Vec7::zeros();
            d[j] = eps;
            fd.set_column(
                j,
                &((transition(&(x + d), &torque, &m)? - transition(&(x - d), &torque, &m)?)
                    / (2.0 * eps)),
            );
        }
        worst_f = worst_f.max((f - fd).norm() / fd.norm());

        let q: Vec4 = x.fixed_rows::<4>(0).into_owned();
        let h = output_jacobian(&q, &m.references);
        let mut fdh = h * 0.0;
        for j in 0..4 {
            let mut d = Vec4::zeros();
            d[j] = eps;
            fdh.set_column(
                j,
                &((output(&(q + d), &m.references) - output(&(q - d), &m.references))
                    / (2.0 * eps)),
            );
        }
        worst_h = worst_h.max((h - fdh).norm() / fdh.norm());
    }
    Ok((worst_f, worst_h))
}

/// `t ↦ R(t)ᵀa` along the continuous rigid-body flow, by RK4 with fine substeps.
#[allow(clippy::too_many_arguments)]
fn flow_output(
    r: &Mat3,
    omega: &Vec3,
    a: &Vec3,
    torque: &Vec3,
    forcing: &Vec3,
    inertia: &InertiaTensor,
    t: f64,
    substeps: usize,
) -> Vec3 {
    let f = |r: &Mat3, w: &Vec3| {
        (
            r * hat(w),
            rigid_body_acceleration(w, torque, inertia) + forcing,
        )
    };
    let dt = t / substeps as f64;
    let (mut r, mut w) = (*r, *omega);
    for _ in 0..substeps {
        let (k1r, k1w) = f(&r, &w);
        let (k2r, k2w) = f(&(r + k1r * (dt / 2.0)), &(w + k1w * (dt / 2.0)));
        let (k3r, k3w) = f(&(r + k2r * (dt / 2.0)), &(w + k2w * (dt / 2.0)));
        let (k4r, k4w) = f(&(r + k3r * dt), &(w + k3w * dt));
        r += (k1r + k2r * 2.0 + k3r * 2.0 + k4r) * (dt / 6.0);
        w += (k1w + k2w * 2.0 + k3w * 2.0 + k4w) * (dt / 6.0);
    }
    r.transpose() * a
}

/// Worst relative error of the first and second output Lie derivatives
/// against finite differences along the exact flow.
pub fn lie_derivative_fidelity(samples: usize, seed: u64) -> crate::Result<(f64, f64)> {
    let inertia = uav_inertia();
    let g = Mat3::identity();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = 1e-3;
    let substeps = 100;
    let (mut worst1, mut worst2) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let r = rod(rng.random_range(0.1..3.0), &random_vec(&mut rng, 1.0))?;
        let omega = random_vec(&mut rng, 1.0);
        let a = random_vec(&mut rng, 1.0).normalize();
        let torque = random_vec(&mut rng, 1.0);
        let delta = random_vec(&mut rng, 0.2);
        let forcing = g * delta;
        let y = |t: f64| flow_output(&r, &omega, &a, &torque, &forcing, &inertia, t, substeps);
        let (yp, y0, ym) = (y(eps), r.transpose() * a, y(-eps));
        let d1 = (yp - ym) / (2.0 * eps);
        let d2 = (yp - y0 * 2.0 + ym) / (eps * eps);
        let l1 = pf_lie_derivative_1(&r, &omega, &a);
        let l2 = pf_lie_derivative_2(&r, &omega, &a, &torque, &inertia, &g, &delta);
        worst1 = worst1.max((l1 - d1).norm() / l1.norm());
        worst2 = worst2.max((l2 - d2).norm() / l2.norm());
    }
    Ok((worst1, worst2))
}

/// Distance in units in the last place.
pub fn ulp_distance(a: f64, b: f64) -> u64 {
    let key = |x: f64| {
        let bits = x.to_bits() as i64;
        if bits < 0 {
            i64::MIN - bits
        } else {
            bits
        }
    };
    key(a).abs_diff(key(b))
}

/// Spacing of doubles at `x`.
pub fn ulp(x: f64) -> f64 {
    let x = x.abs();
    if x == 0.0 {
        f64::from_bits(1)
    } else {
        f64::from_bits(x.to_bits() + 1) - x
    }
}

fn max_ulps<'a>(a: impl IntoIterator<Item = &'a f64>, b: impl IntoIterator<Item = &'a f64>) -> u64 {
    a.into_iter()
        .zip(b)
        .map(|(x, y)| ulp_distance(*x, *y))
        .max()
        .unwrap_or(0)
}

/// Effect of a common offset `−G𝕀δ` in the rate block of every propagated
/// sigma point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetInvariance {
    pub covariance_ulps: u64,
    pub cross_covariance_ulps: u64,
    pub gain_ulps: u64,
    /// `|Δmean − offset|` in ulps of the mean.
    pub mean_shift_ulps: u64,
}

pub fn ukf_offset_invariance(seed: u64) -> crate::Result<OffsetInvariance> {
    let m = uav_filter_model();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let state = GaussianFilterState::new(&GaussianFilterConfig::default(), &m)?;
    let params = UtParams::default();
    let mut worst = OffsetInvariance {
        covariance_ulps: 0,
        cross_covariance_ulps: 0,
        gain_ulps: 0,
        mean_shift_ulps: 0,
    };
    for _ in 0..20 {
        let mut x = state.x;
        x.fixed_rows_mut::<4>(0)
            .copy_from(&random_unit_quaternion(&mut rng));
        x.fixed_rows_mut::<3>(4)
            .copy_from(&random_vec(&mut rng, 1.0));
        let sigma = sigma_points(&x, &(state.p + state.process_noise), &params)?;
        let prop = propagate(&sigma, &random_vec(&mut rng, 1.0), &m)?;
        let delta = random_vec(&mut rng, 0.1);
        let mut c = Vec7::zeros();
        c.fixed_rows_mut::<3>(4)
            .copy_from(&-(m.disturbance_gain * m.inertia.matrix() * delta));
        let a = time_update(&prop, &params, &state.measurement_noise, &m)?;
        let b = time_update(&prop.shifted(&c), &params, &state.measurement_noise, &m)?;
        worst.covariance_ulps = worst
            .covariance_ulps
            .max(max_ulps(a.covariance.iter(), b.covariance.iter()));
        worst.cross_covariance_ulps = worst.cross_covariance_ulps.max(max_ulps(
            a.cross_covariance.iter(),
            b.cross_covariance.iter(),
        ));
        worst.gain_ulps = worst.gain_ulps.max(max_ulps(a.gain.iter(), b.gain.iter()));
        for i in 0..7 {
            let residual = ((b.mean[i] - a.mean[i]) - c[i]).abs();
            let scale = ulp(a.mean[i].abs().max(b.mean[i].abs()));
            worst.mean_shift_ulps = worst.mean_shift_ulps.max((residual / scale).ceil() as u64);
        }
    }
    Ok(worst)
}

/// Log-log slope of the normalization-bias remainder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasSlope {
    /// One fit to the mean remainder over all draws.
    pub pooled: f64,
    /// Spread of the per-draw fits, 5th and 95th percentile.
    pub direction_p05: f64,
    pub direction_p95: f64,
    pub draws: usize,
}

pub fn bias_slope(seed: u64) -> BiasSlope {
    const DRAWS: usize = 200;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let norms = log_space(1e-4, 1e-1, 13);
    let draws: Vec<(Vec4, Vec4)> = (0..DRAWS)
        .map(|_| {
            let q = random_unit_quaternion(&mut rng);
            // A component along q keeps the first-order bias term non-zero.
            let dir = random_unit_quaternion(&mut rng) + q * 0.5;
            (q, dir)
        })
        .collect();
    let mut each: Vec<f64> = draws
        .iter()
        .map(|(q, d)| remainder_slope(q, d, &norms))
        .collect();
    each.sort_by(f64::total_cmp);
    BiasSlope {
        pooled: pooled_remainder_slope(&draws, &norms),
        direction_p05: each[DRAWS / 20],
        direction_p95: each[DRAWS - 1 - DRAWS / 20],
        draws: DRAWS,
    }
}

pub fn check_suite() -> CheckReport {
    let mut entries = Vec::new();
    let fail = |name: &str, e: crate::Error| CheckEntry {
        name: name.into(),
        passed: false,
        measured: f64::NAN,
        threshold: f64::NAN,
        detail: e.to_string(),
    };
    match conservation(&uav_inertia(), &uav_initial_state(), 1e-3, 100.0) {
        Ok(c) => {
            entries.push(CheckEntry::at_most(
                "energy drift",
                c.energy,
                1e-6,
                "torque-free, 100 s",
            ));
            entries.push(CheckEntry::at_most(
                "spatial momentum drift",
                c.spatial_momentum,
                1e-6,
                format!("R C(-hW) I W drifts {:.3e}", c.discrete_momentum),
            ));
            entries.push(CheckEntry::above(
                "explicit Euler energy drift",
                c.explicit_euler_energy,
                1e-3,
                "control run",
            ));
        }
        Err(e) => entries.push(fail("conservation", e)),
    }
    match jacobian_fidelity(100, 7) {
        Ok((f, h)) => {
            entries.push(CheckEntry::at_most(
                "transition Jacobian",
                f,
                1e-5,
                "100 random states",
            ));
            entries.push(CheckEntry::at_most(
                "output Jacobian",
                h,
                1e-5,
                "100 random states",
            ));
        }
        Err(e) => entries.push(fail("Jacobians", e)),
    }
    match lie_derivative_fidelity(100, 8) {
        Ok((l1, l2)) => {
            entries.push(CheckEntry::at_most(
                "first Lie derivative",
                l1,
                1e-5,
                "100 random states",
            ));
            entries.push(CheckEntry::at_most(
                "second Lie derivative",
                l2,
                1e-5,
                "100 random states",
            ));
        }
        Err(e) => entries.push(fail("Lie derivatives", e)),
    }
    match ukf_offset_invariance(9) {
        Ok(u) => {
            let moments = u
                .covariance_ulps
                .max(u.cross_covariance_ulps)
                .max(u.gain_ulps);
            entries.push(CheckEntry::at_most(
                "UKF offset invariance",
                moments as f64,
                0.0,
                "ulps in P, Pxy, K",
            ));
            entries.push(CheckEntry::at_most(
                "UKF mean shift",
                u.mean_shift_ulps as f64,
                1.0,
                "|shift - offset| in ulps of the mean",
            ));
        }
        Err(e) => entries.push(fail("UKF offset invariance", e)),
    }
    let slope = bias_slope(10);
    entries.push(CheckEntry::at_most(
        "normalization bias slope",
        (slope.pooled - 2.0).abs(),
        0.1,
        format!(
            "|slope - 2|, pooled slope {:.4}, per-draw 5-95% [{:.3}, {:.3}]",
            slope.pooled, slope.direction_p05, slope.direction_p95
        ),
    ));
    CheckReport { entries }
}
