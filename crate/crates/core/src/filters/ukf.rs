//! Unscented Kalman filter on `[q; Ω]` with the scaled unscented transform.
//!
//! Sigma sets are stored as an anchor point plus deviations from it. Every
//! weighted statistic is formed from the deviations alone, so a constant
//! offset applied to all points of a set moves the anchor and leaves
//! covariances and gains exactly unchanged.

use nalgebra::{DMatrix, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use super::ekf::{
    condition_number, output, transition, GaussianFilterConfig, GaussianFilterState,
    MAX_INNOVATION_CONDITION,
};
use super::{symmetrize, AttitudeFilter, FilterKind, FilterModel, Mat6, Mat7, StepInput, Vec7};
use crate::error::{Error, Result};
use crate::model::Measurement;
use crate::so3::{quat_normalize, rotation_from_raw, Mat3, Vec3};

/// Eigenvalues below this are raised to it when a Cholesky factorization fails.
pub const EIGENVALUE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtParams {
    pub alpha: f64,
    pub kappa: f64,
    pub beta: f64,
}

impl Default for UtParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            kappa: 0.0,
            beta: 2.0,
        }
    }
}

impl UtParams {
    pub fn lambda(&self, dim: usize) -> f64 {
        let l = dim as f64;
        self.alpha * self.alpha * (l + self.kappa) - l
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if dim as f64 + self.lambda(dim) <= 0.0 {
            return Err(Error::InvalidConfig(
                "unscented transform needs L + λ > 0".into(),
            ));
        }
        Ok(())
    }

    /// Mean and covariance weights for the `2L + 1` points.
    pub fn weights(&self, dim: usize) -> (Vec<f64>, Vec<f64>) {
        let lambda = self.lambda(dim);
        let scale = dim as f64 + lambda;
        let mut wm = vec![0.5 / scale; 2 * dim + 1];
        let mut wc = wm.clone();
        wm[0] = lambda / scale;
        wc[0] = lambda / scale + (1.0 - self.alpha * self.alpha + self.beta);
        (wm, wc)
    }
}

/// `2L + 1` points held as `anchor + deviations[i]`, with `deviations[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaPoints<const N: usize> {
    pub anchor: SVector<f64, N>,
    pub deviations: Vec<SVector<f64, N>>,
}

impl<const N: usize> SigmaPoints<N> {
    pub fn point(&self, i: usize) -> SVector<f64, N> {
        self.anchor + self.deviations[i]
    }

    pub fn len(&self) -> usize {
        self.deviations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deviations.is_empty()
    }

    /// Same set with `offset` added to every point.
    pub fn shifted(&self, offset: &SVector<f64, N>) -> Self {
        Self {
            anchor: self.anchor + offset,
            deviations: self.deviations.clone(),
        }
    }

    /// Builds a set from explicit points, anchoring at the first.
    pub fn from_points(points: &[SVector<f64, N>]) -> Self {
        let anchor = points[0];
        Self {
            anchor,
            deviations: points.iter().map(|p| p - anchor).collect(),
        }
    }

    /// Weighted mean and the mean offset relative to the anchor.
    pub fn mean(&self, wm: &[f64]) -> (SVector<f64, N>, SVector<f64, N>) {
        let offset = self
            .deviations
            .iter()
            .zip(wm)
            .fold(SVector::<f64, N>::zeros(), |acc, (d, w)| acc + d * *w);
        (self.anchor + offset, offset)
    }

    /// Weighted covariance about the mean.
    pub fn covariance(&self, wc: &[f64], offset: &SVector<f64, N>) -> SMatrix<f64, N, N> {
        self.deviations
            .iter()
            .zip(wc)
            .fold(SMatrix::<f64, N, N>::zeros(), |acc, (d, w)| {
                let e = d - offset;
                acc + e * e.transpose() * *w
            })
    }
}

/// Lower Cholesky factor of `v`, retrying once with floored eigenvalues.
pub fn robust_cholesky<const N: usize>(v: &SMatrix<f64, N, N>) -> Result<SMatrix<f64, N, N>> {
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::CovarianceNotPsd);
    }
    if let Some(c) = v.cholesky() {
        return Ok(c.l());
    }
    let eig = DMatrix::from_column_slice(N, N, v.as_slice()).symmetric_eigen();
    let floored = eig.eigenvalues.map(|x| x.max(EIGENVALUE_FLOOR));
    let dense = &eig.eigenvectors * DMatrix::from_diagonal(&floored) * eig.eigenvectors.transpose();
    let rebuilt = symmetrize(&SMatrix::<f64, N, N>::from_column_slice(dense.as_slice()));
    rebuilt
        .cholesky()
        .map(|c| c.l())
        .ok_or(Error::CovarianceNotPsd)
}

pub fn sigma_points<const N: usize>(
    mean: &SVector<f64, N>,
    cov: &SMatrix<f64, N, N>,
    params: &UtParams,
) -> Result<SigmaPoints<N>> {
    let l = robust_cholesky(cov)?;
    let scale = (N as f64 + params.lambda(N)).sqrt();
    let mut deviations = Vec::with_capacity(2 * N + 1);
    deviations.push(SVector::<f64, N>::zeros());
    for sign in [1.0, -1.0] {
        for j in 0..N {
            deviations.push(l.column(j) * (sign * scale));
        }
    }
    Ok(SigmaPoints {
        anchor: *mean,
        deviations,
    })
}

/// Unscented mean and covariance of `f` applied to `N(mean, cov)`.
pub fn unscented_transform<const N: usize, const M: usize>(
    mean: &SVector<f64, N>,
    cov: &SMatrix<f64, N, N>,
    params: &UtParams,
    f: impl Fn(&SVector<f64, N>) -> SVector<f64, M>,
) -> Result<(SVector<f64, M>, SMatrix<f64, M, M>)> {
    let sigma = sigma_points(mean, cov, params)?;
    let mapped: Vec<_> = (0..sigma.len()).map(|i| f(&sigma.point(i))).collect();
    let out = SigmaPoints::from_points(&mapped);
    let (wm, wc) = params.weights(N);
    let (m, offset) = out.mean(&wm);
    Ok((m, out.covariance(&wc, &offset)))
}

/// Sigma points through one step of the plant, quaternions renormalized.
pub fn propagate(
    sigma: &SigmaPoints<7>,
    torque: &Vec3,
    model: &FilterModel,
) -> Result<SigmaPoints<7>> {
    let mut points = Vec::with_capacity(sigma.len());
    for i in 0..sigma.len() {
        let mut next = transition(&sigma.point(i), torque, model)?;
        let q = quat_normalize(&next.fixed_rows::<4>(0).into_owned())?;
        next.fixed_rows_mut::<4>(0).copy_from(&q.to_vec4());
        points.push(next);
    }
    Ok(SigmaPoints::from_points(&points))
}

/// Predicted moments and gain derived from a propagated sigma set.
#[derive(Debug, Clone, PartialEq)]
pub struct UkfPrediction {
    pub mean: Vec7,
    pub covariance: Mat7,
    pub output_mean: Measurement,
    pub output_covariance: Mat6,
    pub cross_covariance: SMatrix<f64, 7, 6>,
    pub gain: SMatrix<f64, 7, 6>,
}

pub fn time_update(
    propagated: &SigmaPoints<7>,
    params: &UtParams,
    measurement_noise: &Mat6,
    model: &FilterModel,
) -> Result<UkfPrediction> {
    let (wm, wc) = params.weights(7);
    let (mean, offset) = propagated.mean(&wm);
    let covariance = symmetrize(&propagated.covariance(&wc, &offset));

    let outputs: Vec<Measurement> = (0..propagated.len())
        .map(|i| {
            output(
                &propagated.point(i).fixed_rows::<4>(0).into_owned(),
                &model.references,
            )
        })
        .collect();
    let ys = SigmaPoints::from_points(&outputs);
    let (output_mean, y_offset) = ys.mean(&wm);
    let output_covariance = symmetrize(&(ys.covariance(&wc, &y_offset) + measurement_noise));
    let mut cross_covariance = SMatrix::<f64, 7, 6>::zeros();
    for ((dx, dy), w) in propagated.deviations.iter().zip(&ys.deviations).zip(&wc) {
        cross_covariance += (dx - offset) * (dy - y_offset).transpose() * *w;
    }
    let condition = condition_number(&output_covariance);
    if condition > MAX_INNOVATION_CONDITION {
        return Err(Error::SingularInnovation { condition });
    }
    let inverse = output_covariance
        .try_inverse()
        .ok_or(Error::SingularInnovation { condition })?;
    Ok(UkfPrediction {
        mean,
        covariance,
        output_mean,
        output_covariance,
        cross_covariance,
        gain: cross_covariance * inverse,
    })
}

pub fn measurement_update(prediction: &UkfPrediction, y: &Measurement) -> Result<(Vec7, Mat7)> {
    let k = &prediction.gain;
    let mut x = prediction.mean + k * (y - prediction.output_mean);
    let p = symmetrize(&(prediction.covariance - k * prediction.output_covariance * k.transpose()));
    let q = quat_normalize(&x.fixed_rows::<4>(0).into_owned())?;
    x.fixed_rows_mut::<4>(0).copy_from(&q.to_vec4());
    Ok((x, p))
}

pub fn ukf_step(
    state: &GaussianFilterState,
    torque: &Vec3,
    y: &Measurement,
    params: &UtParams,
    model: &FilterModel,
) -> Result<GaussianFilterState> {
    let v = symmetrize(&(state.p + state.process_noise));
    let sigma = sigma_points(&state.x, &v, params)?;
    let propagated = propagate(&sigma, torque, model)?;
    let prediction = time_update(&propagated, params, &state.measurement_noise, model)?;
    let (x, p) = measurement_update(&prediction, y)?;
    Ok(GaussianFilterState {
        x,
        p,
        ..state.clone()
    })
}

pub struct Ukf {
    pub state: GaussianFilterState,
    pub params: UtParams,
    model: FilterModel,
}

impl Ukf {
    pub fn new(cfg: &GaussianFilterConfig, params: UtParams, model: FilterModel) -> Result<Self> {
        params.validate(7)?;
        Ok(Self {
            state: GaussianFilterState::new(cfg, &model)?,
            params,
            model,
        })
    }
}

impl AttitudeFilter for Ukf {
    fn kind(&self) -> FilterKind {
        FilterKind::Ukf
    }

    fn step(&mut self, input: &StepInput<'_>) -> Result<()> {
        self.state = ukf_step(
            &self.state,
            &input.torque,
            input.y_next,
            &self.params,
            &self.model,
        )?;
        Ok(())
    }

    fn rotation(&self) -> Mat3 {
        rotation_from_raw(&self.state.quaternion())
    }

    fn omega(&self) -> Vec3 {
        self.state.omega()
    }

    fn group_error(&self) -> f64 {
        (self.state.quaternion().norm() - 1.0).abs()
    }

    fn diagnostic_names(&self) -> &'static [&'static str] {
        &["trace_p"]
    }

    fn diagnostics(&self) -> Vec<f64> {
        vec![self.state.p.trace()]
    }
}
