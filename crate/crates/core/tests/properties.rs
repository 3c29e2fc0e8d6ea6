use proptest::prelude::*;

use tso3::filters::bias::bias_remainder;
use tso3::filters::mef::{mef_step, MefConfig, MefState};
use tso3::filters::pf::{optimal_correction, CorrectionTerms};
use tso3::filters::ukf::UtParams;
use tso3::filters::{AttitudeFilter, Ekf, FilterKind, FilterModel, Mef, Pf, StepInput, Ukf};
use tso3::harness::monte_carlo::{aggregate, median, sign_test_p, Trial};
use tso3::harness::output::{read_series, write_series};
use tso3::harness::run::{FilterSeries, FilterSummary};
use tso3::harness::spectral::amplitude_spectrum;
use tso3::harness::{ExperimentConfig, Variant};
use tso3::model::Measurement;
use tso3::so3::{Mat3, Vec3, Vec4};

fn model() -> FilterModel {
    ExperimentConfig::case1(Variant::ProcessNoise)
        .filter_model()
        .unwrap()
}

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-range..range).prop_map(Vec3::from)
}

fn measurement() -> impl Strategy<Value = Measurement> {
    prop::array::uniform6(-1.5..1.5f64).prop_map(|a| Measurement::from_column_slice(&a))
}

fn filters() -> Vec<Box<dyn AttitudeFilter>> {
    let cfg = ExperimentConfig::case1(Variant::ProcessNoise);
    let m = model();
    let b = &cfg.filters;
    let ukf = b.ukf.clone().unwrap();
    vec![
        Box::new(Ekf::new(b.ekf.as_ref().unwrap(), m.clone()).unwrap()),
        Box::new(Ukf::new(&ukf.gaussian, ukf.unscented, m.clone()).unwrap()),
        Box::new(Mef::new(b.mef.as_ref().unwrap(), m.clone()).unwrap()),
        Box::new(Pf::new(b.pf.as_ref().unwrap(), m).unwrap()),
    ]
}

fn orthogonality(r: &Mat3) -> f64 {
    (r.transpose() * r - Mat3::identity())
        .amax()
        .max((r.determinant() - 1.0).abs())
}

fn series(values: Vec<f64>) -> FilterSeries {
    let n = values.len();
    FilterSeries {
        kind: FilterKind::Mef,
        diagnostic_names: vec!["gain_norm".into()],
        times_s: (0..n).map(|i| i as f64 * 1e-3).collect(),
        e_r_rad: values.clone(),
        e_omega_rad_s: values.iter().map(|v| [*v, -v, v * 3.0]).collect(),
        group_error: values.iter().map(|v| v.abs() * 1e-16).collect(),
        diagnostics: values.iter().map(|v| vec![v / 7.0]).collect(),
    }
}

fn trial(offset: u64, e: f64) -> Trial {
    Trial {
        seed_offset: offset,
        summaries: vec![FilterSummary {
            kind: FilterKind::Ekf,
            steady_state_mean_e_r_rad: e,
            steady_state_std_e_r_rad: e / 3.0,
            steady_state_mean_e_omega_rad_s: e * 2.0,
            steady_state_std_e_omega_rad_s: e,
            convergence_time_s: Some(e * 10.0),
            max_group_error: e * 1e-16,
            divergence: None,
        }],
        pf: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn attitude_states_stay_on_their_groups(
        ys in prop::collection::vec(measurement(), 40),
        torques in prop::collection::vec(vec3(2.0), 40),
    ) {
        for mut f in filters() {
            for k in 0..ys.len() - 1 {
                let input = StepInput { time_s: k as f64 * 1e-3, torque: torques[k], y_now: &ys[k], y_next: &ys[k + 1] };
                f.step(&input).unwrap();
                prop_assert!(f.group_error() <= 1e-9, "{:?}: {}", f.kind(), f.group_error());
                prop_assert!(orthogonality(&f.rotation()) <= 1e-9, "{:?}", f.kind());
            }
        }
    }

    #[test]
    fn mef_gain_is_symmetric_after_every_step(
        ys in prop::collection::vec(measurement(), 30),
        omega in vec3(1.0),
        gain in prop::array::uniform6(0.1..10.0f64),
    ) {
        let m = model();
        let cfg = MefConfig { initial_omega_rad_s: omega.into(), initial_gain_diag: gain, ..Default::default() };
        let mut s = MefState::new(&cfg, &m).unwrap();
        for y in &ys {
            s = mef_step(&s, y, &Vec3::zeros(), &m).unwrap();
            prop_assert!((s.gain - s.gain.transpose()).amax() <= 1e-9);
        }
    }

    #[test]
    fn pf_correction_is_invariant_under_reciprocal_penalty_scaling(
        b in prop::array::uniform9(-1.0..1.0f64),
        gamma in vec3(1.0),
        q in 1e-4..1e-1f64,
        sigma in 1e-4..1e-1f64,
        c in 0.01..100.0f64,
    ) {
        let terms = CorrectionTerms { b: Mat3::from_row_slice(&b), gamma };
        let base = optimal_correction(&terms, &(Mat3::identity() * q), &(Mat3::identity() * sigma)).unwrap();
        let scaled = optimal_correction(&terms, &(Mat3::identity() * (q * c)), &(Mat3::identity() * (sigma / c))).unwrap();
        prop_assert!((base - scaled).norm() <= 1e-9 * base.norm().max(1e-12));
    }

    #[test]
    fn normalization_bias_remainder_is_second_order(
        q in prop::array::uniform4(-1.0..1.0f64).prop_filter("non-zero", |a| Vec4::from(*a).norm() > 0.1),
        dir in prop::array::uniform4(-1.0..1.0f64).prop_filter("non-zero", |a| Vec4::from(*a).norm() > 0.1),
        size in 1e-6..1e-2f64,
    ) {
        let q = Vec4::from(q).normalize();
        let c = Vec4::from(dir).normalize() * size;
        prop_assert!(bias_remainder(&q, &c) <= 2.5 * size * size);
    }

    #[test]
    fn csv_series_round_trip_is_lossless(values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 1..50)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let s = series(values);
        write_series(&s, &path).unwrap();
        let back = read_series(FilterKind::Mef, &path).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back.e_r_rad), bits(&s.e_r_rad));
        prop_assert_eq!(bits(&back.times_s), bits(&s.times_s));
        prop_assert_eq!(back.e_omega_rad_s, s.e_omega_rad_s);
        prop_assert_eq!(back.diagnostics, s.diagnostics);
    }

    #[test]
    fn aggregation_ignores_completion_order(errors in prop::collection::vec(0.0..1.0f64, 1..12), rotate in 0usize..12) {
        let mut cfg = ExperimentConfig::case1(Variant::ProcessNoise);
        cfg.filters.retain(&[FilterKind::Ekf]);
        let trials: Vec<Trial> = errors.iter().enumerate().map(|(i, e)| trial(i as u64, *e)).collect();
        let mut shuffled = trials.clone();
        shuffled.rotate_left(rotate % trials.len());
        shuffled.reverse();
        prop_assert_eq!(aggregate(&cfg, trials), aggregate(&cfg, shuffled));
    }

    #[test]
    fn sign_test_is_a_symmetric_probability(d in prop::collection::vec(-1.0..1.0f64, 1..30)) {
        let p = sign_test_p(&d);
        let flipped: Vec<f64> = d.iter().map(|x| -x).collect();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert_eq!(p, sign_test_p(&flipped));
    }

    #[test]
    fn median_lies_between_the_extremes(v in prop::collection::vec(-1e3..1e3f64, 1..40)) {
        let m = median(v.iter().cloned());
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= m && m <= hi);
    }

    #[test]
    fn on_bin_sinusoid_peaks_at_its_frequency(bin in 3usize..200, amplitude in 0.01..10.0f64, offset in -5.0..5.0f64, phase in 0.0..std::f64::consts::TAU) {
        let (n, h) = (1024usize, 1e-2);
        let f = bin as f64 / (n as f64 * h);
        let x: Vec<f64> = (0..n).map(|i| offset + amplitude * (2.0 * std::f64::consts::PI * f * i as f64 * h + phase).sin()).collect();
        let s = amplitude_spectrum(&x, h).unwrap();
        let top = s.peaks.iter().cloned().fold(None::<tso3::harness::spectral::Peak>, |best, p| match best {
            Some(b) if b.magnitude >= p.magnitude => Some(b),
            _ => Some(p),
        }).unwrap();
        prop_assert!((top.frequency_hz - f).abs() <= s.resolution_hz() * 1.01);
        prop_assert!((top.magnitude / amplitude - 1.0).abs() < 0.05, "{} vs {}", top.magnitude, amplitude);
    }
}

#[test]
fn ukf_parameters_reject_degenerate_spread() {
    let bad = UtParams {
        alpha: 0.0,
        kappa: 0.0,
        beta: 2.0,
    };
    assert!(bad.validate(7).is_err());
}
