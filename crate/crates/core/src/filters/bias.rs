//! First-order bias introduced by projecting a corrected quaternion back onto
//! the unit sphere.

use crate::so3::Vec4;

/// `(q + c)(qᵀc)`: to first order, `normalize(q + c) ≈ (q + c) − bias`.
pub fn normalization_bias(q_pred: &Vec4, correction: &Vec4) -> Vec4 {
    (q_pred + correction) * q_pred.dot(correction)
}

/// `‖normalize(q + c) − [(q + c) − bias]‖`.
pub fn bias_remainder(q_pred: &Vec4, correction: &Vec4) -> f64 {
    let corrected = q_pred + correction;
    let exact = corrected / corrected.norm();
    (exact - (corrected - normalization_bias(q_pred, correction))).norm()
}

/// Least-squares slope of `log(remainder)` against `log(‖c‖)` along the
/// direction `dir`, sampled at the given correction norms.
pub fn remainder_slope(q_pred: &Vec4, dir: &Vec4, norms: &[f64]) -> f64 {
    let unit = dir / dir.norm();
    log_log_slope(
        norms,
        norms.iter().map(|n| bias_remainder(q_pred, &(unit * *n))),
    )
}

/// Slope of the mean remainder over `(prediction, direction)` draws, one
/// fit for the whole population.
pub fn pooled_remainder_slope(draws: &[(Vec4, Vec4)], norms: &[f64]) -> f64 {
    let means = norms.iter().map(|n| {
        draws
            .iter()
            .map(|(q, dir)| bias_remainder(q, &(dir * (*n / dir.norm()))))
            .sum::<f64>()
            / draws.len() as f64
    });
    log_log_slope(norms, means)
}

fn log_log_slope(xs: &[f64], ys: impl Iterator<Item = f64>) -> f64 {
    let points: Vec<(f64, f64)> = xs.iter().zip(ys).map(|(x, y)| (x.ln(), y.ln())).collect();
    let count = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / count;
    let my = points.iter().map(|p| p.1).sum::<f64>() / count;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// `n` log-spaced values from `lo` to `hi`.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}
