//! Independent replications of a case with shifted seeds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{run_case, FilterSummary, PfDiagnostics};
use crate::error::{Error, Result};
use crate::filters::FilterKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub seed_offset: u64,
    pub summaries: Vec<FilterSummary>,
    pub pf: Option<PfDiagnostics>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Stat {
    /// Mean and sample standard deviation of the finite values.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        let n = v.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                count: 0,
            };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std,
            count: n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterAggregate {
    pub kind: FilterKind,
    pub steady_state_mean_e_r_rad: Stat,
    pub steady_state_mean_e_omega_rad_s: Stat,
    pub convergence_time_s: Stat,
    pub max_group_error: f64,
    pub divergences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub trials: usize,
    pub base_measurement_seed: u64,
    pub base_model_error_seed: Option<u64>,
    pub filters: Vec<FilterAggregate>,
    pub pf_trace_m: Option<Stat>,
    /// Per-trial summaries ordered by seed offset.
    pub runs: Vec<Trial>,
}

impl MonteCarloReport {
    pub fn filter(&self, kind: FilterKind) -> Option<&FilterAggregate> {
        self.filters.iter().find(|f| f.kind == kind)
    }

    pub fn any_divergence(&self) -> bool {
        self.filters.iter().any(|f| f.divergences > 0)
    }
}

/// Median of the finite values, `NaN` when there are none.
pub fn median(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Two-sided sign test on paired differences; ties are dropped.
pub fn sign_test_p(differences: &[f64]) -> f64 {
    let nonzero: Vec<f64> = differences.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nonzero.len();
    if n == 0 {
        return 1.0;
    }
    let positive = nonzero.iter().filter(|d| **d > 0.0).count();
    let tail = positive.min(n - positive);
    let mut choose = 1.0;
    let mut sum = 0.0;
    for i in 0..=tail {
        if i > 0 {
            choose = choose * (n - i + 1) as f64 / i as f64;
        }
        sum += choose;
    }
    (2.0 * sum / 2f64.powi(n as i32)).min(1.0)
}

pub fn run_trial(cfg: &ExperimentConfig, seed_offset: u64) -> Result<Trial> {
    let r = run_case(&cfg.with_seed_offset(seed_offset))?;
    Ok(Trial {
        seed_offset,
        summaries: r.summaries,
        pf: r.pf,
    })
}

/// Runs trials with seed offsets `0..trials` in parallel and aggregates them.
pub fn monte_carlo(cfg: &ExperimentConfig, trials: usize) -> Result<MonteCarloReport> {
    if trials == 0 {
        return Err(Error::InvalidConfig("need at least one trial".into()));
    }
    cfg.validate()?;
    let runs: Vec<Trial> = (0..trials as u64)
        .into_par_iter()
        .map(|i| run_trial(cfg, i))
        .collect::<Result<_>>()?;
    Ok(aggregate(cfg, runs))
}

/// Reduces trials in seed order, so the result does not depend on the order
/// they finished in.
pub fn aggregate(cfg: &ExperimentConfig, mut runs: Vec<Trial>) -> MonteCarloReport {
    runs.sort_by_key(|t| t.seed_offset);
    let filters = cfg
        .filters
        .selected()
        .into_iter()
        .map(|kind| {
            let sums: Vec<&FilterSummary> = runs
                .iter()
                .filter_map(|t| t.summaries.iter().find(|s| s.kind == kind))
                .collect();
            FilterAggregate {
                kind,
                steady_state_mean_e_r_rad: Stat::of(
                    sums.iter().map(|s| s.steady_state_mean_e_r_rad),
                ),
                steady_state_mean_e_omega_rad_s: Stat::of(
                    sums.iter().map(|s| s.steady_state_mean_e_omega_rad_s),
                ),
                convergence_time_s: Stat::of(sums.iter().filter_map(|s| s.convergence_time_s)),
                max_group_error: sums.iter().map(|s| s.max_group_error).fold(0.0, f64::max),
                divergences: sums.iter().filter(|s| s.divergence.is_some()).count(),
            }
        })
        .collect();
    let pf_trace_m = cfg
        .filters
        .pf
        .as_ref()
        .map(|_| Stat::of(runs.iter().filter_map(|t| t.pf.as_ref().map(|p| p.trace_m))));
    MonteCarloReport {
        trials: runs.len(),
        base_measurement_seed: cfg.measurement.seed,
        base_model_error_seed: cfg.model_error_seed(),
        filters,
        pf_trace_m,
        runs,
    }
}
