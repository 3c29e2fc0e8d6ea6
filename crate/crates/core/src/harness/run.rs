//! Single comparative run: one truth trajectory, one measurement stream,
//! every selected filter.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::error::Result;
use crate::filters::{AttitudeFilter, Ekf, FilterKind, Mef, Pf, StepInput, Ukf};
use crate::model::{
    error_attitude, error_rate, measurement_stream, simulate_truth, Measurement, TruthTrajectory,
};

/// Attitude error below which a filter counts as converged (2°).
pub const CONVERGENCE_THRESHOLD_RAD: f64 = 2.0 * std::f64::consts::PI / 180.0;
/// Fraction of the horizon, counted from the end, that forms the steady-state window.
pub const STEADY_STATE_FRACTION: f64 = 0.25;

/// Error history of one filter. Columns after the errors are
/// `group_error` followed by the filter's own diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSeries {
    pub kind: FilterKind,
    pub diagnostic_names: Vec<String>,
    pub times_s: Vec<f64>,
    pub e_r_rad: Vec<f64>,
    pub e_omega_rad_s: Vec<[f64; 3]>,
    pub group_error: Vec<f64>,
    /// One row per sample.
    pub diagnostics: Vec<Vec<f64>>,
}

impl FilterSeries {
    fn new(kind: FilterKind, names: &[&str], capacity: usize) -> Self {
        Self {
            kind,
            diagnostic_names: names.iter().map(|s| s.to_string()).collect(),
            times_s: Vec::with_capacity(capacity),
            e_r_rad: Vec::with_capacity(capacity),
            e_omega_rad_s: Vec::with_capacity(capacity),
            group_error: Vec::with_capacity(capacity),
            diagnostics: Vec::with_capacity(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.times_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_s.is_empty()
    }

    /// Index of the first sample at or after `t`.
    pub fn index_at(&self, t: f64) -> usize {
        self.times_s.partition_point(|&s| s < t - 1e-9)
    }

    pub fn e_omega_norm(&self) -> Vec<f64> {
        self.e_omega_rad_s
            .iter()
            .map(|e| (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub time_s: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub kind: FilterKind,
    pub steady_state_mean_e_r_rad: f64,
    pub steady_state_std_e_r_rad: f64,
    pub steady_state_mean_e_omega_rad_s: f64,
    pub steady_state_std_e_omega_rad_s: f64,
    /// First time after which `e_R` stays below the threshold; `None` if it never settles.
    pub convergence_time_s: Option<f64>,
    pub max_group_error: f64,
    pub divergence: Option<Divergence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfDiagnostics {
    pub trace_m: f64,
    pub sigma_star: f64,
    pub final_sigma: f64,
    pub prediction_penalty: f64,
    pub horizon_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub measurement_seed: u64,
    pub model_error_seed: Option<u64>,
    pub version: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub series: Vec<FilterSeries>,
    pub summaries: Vec<FilterSummary>,
    pub pf: Option<PfDiagnostics>,
    pub provenance: Provenance,
}

impl RunResult {
    pub fn series(&self, kind: FilterKind) -> Option<&FilterSeries> {
        self.series.iter().find(|s| s.kind == kind)
    }

    pub fn summary(&self, kind: FilterKind) -> Option<&FilterSummary> {
        self.summaries.iter().find(|s| s.kind == kind)
    }

    pub fn any_divergence(&self) -> bool {
        self.summaries.iter().any(|s| s.divergence.is_some())
    }
}

pub fn version_string() -> String {
    format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let json = serde_json::to_string(cfg)?;
    Ok(hex::encode(Sha256::digest(json.as_bytes())))
}

/// The EKF, UKF and MEF of a configuration. The PF is built separately so
/// that its residual statistics stay reachable.
fn build_filters(cfg: &ExperimentConfig) -> Result<Vec<Box<dyn AttitudeFilter>>> {
    let model = cfg.filter_model()?;
    let mut out: Vec<Box<dyn AttitudeFilter>> = Vec::new();
    if let Some(c) = &cfg.filters.ekf {
        out.push(Box::new(Ekf::new(c, model.clone())?));
    }
    if let Some(c) = &cfg.filters.ukf {
        out.push(Box::new(Ukf::new(&c.gaussian, c.unscented, model.clone())?));
    }
    if let Some(c) = &cfg.filters.mef {
        out.push(Box::new(Mef::new(c, model.clone())?));
    }
    Ok(out)
}

fn record(
    series: &mut FilterSeries,
    filter: &dyn AttitudeFilter,
    truth: &TruthTrajectory,
    k: usize,
) {
    let state = &truth.states[k];
    let r_true = state.rotation();
    let r_est = filter.rotation();
    series.times_s.push(truth.times[k]);
    series.e_r_rad.push(error_attitude(&r_true, &r_est));
    let e = error_rate(&state.omega, &filter.omega(), &r_true, &r_est);
    series.e_omega_rad_s.push([e[0], e[1], e[2]]);
    series.group_error.push(filter.group_error());
    series.diagnostics.push(filter.diagnostics());
}

/// Runs one filter over a fixed truth and measurement stream.
///
/// Returns the history up to the last successful step and the divergence, if any.
pub fn run_filter(
    filter: &mut dyn AttitudeFilter,
    truth: &TruthTrajectory,
    measurements: &[Measurement],
) -> (FilterSeries, Option<Divergence>) {
    let mut series =
        FilterSeries::new(filter.kind(), filter.diagnostic_names(), truth.states.len());
    record(&mut series, filter, truth, 0);
    for k in 0..truth.steps() {
        let input = StepInput {
            time_s: truth.times[k],
            torque: truth.torques[k],
            y_now: &measurements[k],
            y_next: &measurements[k + 1],
        };
        if let Err(e) = filter.step(&input) {
            let divergence = Divergence {
                time_s: truth.times[k + 1],
                message: e.to_string(),
            };
            return (series, Some(divergence));
        }
        record(&mut series, filter, truth, k + 1);
    }
    (series, None)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// First sample time after which `e` stays strictly below `threshold`.
pub fn convergence_time(times: &[f64], e: &[f64], threshold: f64) -> Option<f64> {
    let last_above = e.iter().rposition(|v| !(*v < threshold));
    match last_above {
        None => times.first().copied(),
        Some(i) if i + 1 < times.len() => Some(times[i + 1]),
        Some(_) => None,
    }
}

pub fn steady_state_start(horizon_s: f64) -> f64 {
    horizon_s * (1.0 - STEADY_STATE_FRACTION)
}

pub fn summarize(
    series: &FilterSeries,
    horizon_s: f64,
    divergence: Option<Divergence>,
) -> FilterSummary {
    let (mut er, mut ew) = ((f64::NAN, f64::NAN), (f64::NAN, f64::NAN));
    if divergence.is_none() {
        let start = series.index_at(steady_state_start(horizon_s));
        er = mean_std(&series.e_r_rad[start..]);
        ew = mean_std(&series.e_omega_norm()[start..]);
    }
    let convergence_time_s = if divergence.is_none() {
        convergence_time(&series.times_s, &series.e_r_rad, CONVERGENCE_THRESHOLD_RAD)
    } else {
        None
    };
    FilterSummary {
        kind: series.kind,
        steady_state_mean_e_r_rad: er.0,
        steady_state_std_e_r_rad: er.1,
        steady_state_mean_e_omega_rad_s: ew.0,
        steady_state_std_e_omega_rad_s: ew.1,
        convergence_time_s,
        max_group_error: series.group_error.iter().copied().fold(0.0, f64::max),
        divergence,
    }
}

/// Simulated truth and the shared measurement stream of a configuration.
pub fn simulate(cfg: &ExperimentConfig) -> Result<(TruthTrajectory, Vec<Measurement>)> {
    let truth = simulate_truth(
        &cfg.truth_model()?,
        &cfg.initial_state.to_state()?,
        cfg.step_s,
        cfg.steps(),
    )?;
    let measurements = measurement_stream(&truth, &cfg.measurement);
    Ok((truth, measurements))
}

/// Residual statistics accumulated by a PF over its run.
pub fn pf_diagnostics(pf: &Pf) -> Option<PfDiagnostics> {
    let m = pf.state.residual_covariance()?;
    Some(PfDiagnostics {
        trace_m: m.trace(),
        sigma_star: crate::filters::pf::sigma_star(&m),
        final_sigma: pf.state.correction_penalty[(0, 0)],
        prediction_penalty: pf.state.prediction_penalty[(0, 0)],
        horizon_s: pf.state.horizon_s,
    })
}

pub fn run_case(cfg: &ExperimentConfig) -> Result<RunResult> {
    cfg.validate()?;
    let (truth, measurements) = simulate(cfg)?;
    let mut series = Vec::new();
    let mut summaries = Vec::new();
    let mut pf = None;
    for mut filter in build_filters(cfg)? {
        let (s, divergence) = run_filter(filter.as_mut(), &truth, &measurements);
        summaries.push(summarize(&s, cfg.horizon_s, divergence));
        series.push(s);
    }
    if let Some(c) = &cfg.filters.pf {
        let mut filter = Pf::new(c, cfg.filter_model()?)?;
        let (s, divergence) = run_filter(&mut filter, &truth, &measurements);
        if divergence.is_none() {
            pf = pf_diagnostics(&filter);
        }
        summaries.push(summarize(&s, cfg.horizon_s, divergence));
        series.push(s);
    }
    Ok(RunResult {
        config: cfg.clone(),
        series,
        summaries,
        pf,
        provenance: Provenance {
            config_sha256: config_hash(cfg)?,
            measurement_seed: cfg.measurement.seed,
            model_error_seed: cfg.model_error_seed(),
            version: version_string(),
        },
    })
}
