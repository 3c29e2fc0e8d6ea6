//! Offline PF tuning: rerun the PF on a fixed measurement record and move
//! `Σ` by the covariance-constraint rule until the residual variance lands
//! in the dead band.

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{pf_diagnostics, run_filter, simulate, PfDiagnostics};
use crate::error::{Error, Result};
use crate::filters::pf::{tuning_move, Pf, TuningMove};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRound {
    pub sigma: f64,
    pub sigma_star: f64,
    pub trace_m: f64,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub target_variance: f64,
    pub rounds: Vec<TuningRound>,
    /// Penalty of the round whose `σ*` came closest to the target.
    pub best_sigma: f64,
    pub best_sigma_star: f64,
    /// Whether some round ended inside the dead band.
    pub settled: bool,
}

impl TuningReport {
    pub fn best_relative_error(&self) -> f64 {
        (self.best_sigma_star / self.target_variance - 1.0).abs()
    }
}

fn action_name(m: TuningMove) -> &'static str {
    match m {
        TuningMove::Decrease => "decrease",
        TuningMove::Increase => "increase",
        TuningMove::Keep => "keep",
    }
}

/// Runs the PF of `cfg` once at penalty `sigma` on the given record.
pub fn pf_run(cfg: &ExperimentConfig, sigma: f64) -> Result<PfDiagnostics> {
    let (truth, measurements) = simulate(cfg)?;
    pf_run_on(cfg, sigma, &truth, &measurements)
}

fn pf_run_on(
    cfg: &ExperimentConfig,
    sigma: f64,
    truth: &crate::model::TruthTrajectory,
    measurements: &[crate::model::Measurement],
) -> Result<PfDiagnostics> {
    let mut pf_cfg = cfg
        .filters
        .pf
        .clone()
        .ok_or_else(|| Error::InvalidConfig("configuration has no pf block".into()))?;
    pf_cfg.correction_penalty = sigma;
    let mut pf = Pf::new(&pf_cfg, cfg.filter_model()?)?;
    let (_, divergence) = run_filter(&mut pf, truth, measurements);
    if let Some(d) = divergence {
        return Err(Error::InvalidConfig(format!(
            "pf diverged at {} s: {}",
            d.time_s, d.message
        )));
    }
    pf_diagnostics(&pf).ok_or_else(|| Error::InvalidConfig("pf produced no residuals".into()))
}

/// Applies the tuning rule until it keeps `Σ` or the round budget runs out.
pub fn tune_pf(cfg: &ExperimentConfig) -> Result<TuningReport> {
    cfg.validate()?;
    let initial = cfg
        .filters
        .pf
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("configuration has no pf block".into()))?
        .correction_penalty;
    let target = cfg.pf_target_variance();
    let rule = cfg.pf_tuning.rule;
    let (truth, measurements) = simulate(cfg)?;
    let mut sigma = initial;
    let mut rounds: Vec<TuningRound> = Vec::new();
    let mut settled = false;
    for _ in 0..cfg.pf_tuning.max_rounds.max(1) {
        let d = pf_run_on(cfg, sigma, &truth, &measurements)?;
        let m = tuning_move(d.sigma_star, target, &rule);
        rounds.push(TuningRound {
            sigma,
            sigma_star: d.sigma_star,
            trace_m: d.trace_m,
            action: action_name(m).into(),
        });
        match m {
            TuningMove::Keep => {
                settled = true;
                break;
            }
            TuningMove::Decrease => sigma /= rule.factor,
            TuningMove::Increase => sigma *= rule.factor,
        }
    }
    let best = rounds
        .iter()
        .min_by(|a, b| {
            let ea = (a.sigma_star / target - 1.0).abs();
            let eb = (b.sigma_star / target - 1.0).abs();
            ea.total_cmp(&eb)
        })
        .expect("at least one round");
    Ok(TuningReport {
        target_variance: target,
        best_sigma: best.sigma,
        best_sigma_star: best.sigma_star,
        rounds,
        settled,
    })
}
