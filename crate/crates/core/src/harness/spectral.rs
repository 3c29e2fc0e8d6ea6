//! Amplitude spectra of the rate-error components.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::run::RunResult;
use crate::error::{Error, Result};
use crate::filters::FilterKind;

/// Fewest samples an analysis window may hold.
pub const MIN_WINDOW_SAMPLES: usize = 64;
/// A bin is a peak when it is a local maximum above this multiple of the median.
pub const PEAK_FACTOR: f64 = 5.0;
/// Peaks must also exceed this fraction of the largest bin.
pub const RELATIVE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub frequency_hz: f64,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub frequencies_hz: Vec<f64>,
    /// Single-sided amplitude, so a sinusoid of amplitude `A` reads ≈ `A`.
    pub magnitudes: Vec<f64>,
    pub peaks: Vec<Peak>,
}

impl Spectrum {
    pub fn resolution_hz(&self) -> f64 {
        self.frequencies_hz.get(1).copied().unwrap_or(f64::NAN)
    }

    /// Magnitude at the bin nearest `f`.
    pub fn magnitude_at(&self, f: f64) -> f64 {
        let k = (f / self.resolution_hz()).round() as usize;
        self.magnitudes[k.min(self.magnitudes.len() - 1)]
    }

    pub fn nyquist_hz(&self) -> f64 {
        *self.frequencies_hz.last().unwrap_or(&0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpectrum {
    pub kind: FilterKind,
    /// One spectrum per inertial rate-error component.
    pub components: [Spectrum; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub window_s: [f64; 2],
    pub samples: usize,
    pub filters: Vec<FilterSpectrum>,
}

impl SpectralReport {
    pub fn filter(&self, kind: FilterKind) -> Option<&FilterSpectrum> {
        self.filters.iter().find(|f| f.kind == kind)
    }
}

/// Removes the mean. A least-squares line is not removed: over a whole
/// number of periods a sinusoid has a non-zero fitted slope, and taking it
/// out leaks a ramp into the lowest bins.
pub fn detrend(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - mean).collect()
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Detrended, Hann-windowed single-sided amplitude spectrum of a uniformly
/// sampled signal.
pub fn amplitude_spectrum(x: &[f64], step_s: f64) -> Result<Spectrum> {
    let n = x.len();
    if n < MIN_WINDOW_SAMPLES {
        return Err(Error::WindowTooShort {
            samples: n,
            required: MIN_WINDOW_SAMPLES,
        });
    }
    let window: Vec<f64> = (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect();
    let gain: f64 = window.iter().sum();
    let mut buf: Vec<Complex<f64>> = detrend(x)
        .into_iter()
        .zip(&window)
        .map(|(v, w)| Complex::new(v * w, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let bins = n / 2 + 1;
    let frequencies_hz: Vec<f64> = (0..bins).map(|k| k as f64 / (n as f64 * step_s)).collect();
    let magnitudes: Vec<f64> = (0..bins)
        .map(|k| {
            let scale = if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
                1.0
            } else {
                2.0
            };
            scale * buf[k].norm() / gain
        })
        .collect();
    // The relative floor keeps round-off ripple of a clean signal out.
    let largest = magnitudes.iter().copied().fold(0.0, f64::max);
    let threshold = (PEAK_FACTOR * median(&magnitudes)).max(RELATIVE_FLOOR * largest);
    let peaks = (1..bins)
        .filter(|&k| {
            let m = magnitudes[k];
            m > threshold && m >= magnitudes[k - 1] && (k + 1 == bins || m >= magnitudes[k + 1])
        })
        .map(|k| Peak {
            frequency_hz: frequencies_hz[k],
            magnitude: magnitudes[k],
        })
        .collect();
    Ok(Spectrum {
        frequencies_hz,
        magnitudes,
        peaks,
    })
}

/// Spectra of every filter whose history covers `[t0, t1]`.
pub fn spectral_analysis(result: &RunResult, window: [f64; 2]) -> Result<SpectralReport> {
    let [t0, t1] = window;
    let horizon = result.config.horizon_s;
    if !(t0 >= 0.0 && t1 > t0 && t1 <= horizon + 1e-9) {
        return Err(Error::InvalidConfig(format!(
            "window [{t0}, {t1}] is not inside [0, {horizon}]"
        )));
    }
    let step = result.config.step_s;
    let mut filters = Vec::new();
    let mut samples = 0;
    for s in &result.series {
        let (a, b) = (s.index_at(t0), s.index_at(t1 + 0.5 * step));
        let covered = s.times_s.last().is_some_and(|&t| t >= t1 - 1e-9);
        if !covered {
            continue;
        }
        samples = b - a;
        let component = |j: usize| -> Result<Spectrum> {
            let x: Vec<f64> = s.e_omega_rad_s[a..b].iter().map(|e| e[j]).collect();
            amplitude_spectrum(&x, step)
        };
        filters.push(FilterSpectrum {
            kind: s.kind,
            components: [component(0)?, component(1)?, component(2)?],
        });
    }
    if filters.is_empty() {
        let n = ((t1 - t0) / step).round() as usize + 1;
        if n < MIN_WINDOW_SAMPLES {
            return Err(Error::WindowTooShort {
                samples: n,
                required: MIN_WINDOW_SAMPLES,
            });
        }
    }
    Ok(SpectralReport {
        window_s: window,
        samples,
        filters,
    })
}
