//! C ABI over the `tso3` harness.
//!
//! Every fallible call returns a [`Tso3Status`]; on failure the message is
//! available from [`tso3_last_error`] on the same thread. Handles are opaque
//! and owned by the caller, who releases them with the matching `*_free`.
//! Panics never cross the boundary; they surface as `TSO3_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use tso3::filters::FilterKind;
use tso3::harness::checks::{check_suite, CheckReport};
use tso3::harness::output::{read_run, write_run};
use tso3::harness::spectral::spectral_analysis;
use tso3::harness::tuning::{pf_run, tune_pf};
use tso3::harness::{run_case, ExperimentConfig, Platform, RunResult, Variant};
use tso3::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tso3Status {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    Divergence = 4,
    Io = 5,
    NotFound = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tso3Platform {
    Uav = 0,
    Satellite = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tso3Variant {
    ProcessNoise = 0,
    Deterministic = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tso3Filter {
    Ekf = 0,
    Ukf = 1,
    Mef = 2,
    Pf = 3,
}

/// Bit for each filter in a selection mask.
pub const TSO3_MASK_EKF: u32 = 1;
pub const TSO3_MASK_UKF: u32 = 2;
pub const TSO3_MASK_MEF: u32 = 4;
pub const TSO3_MASK_PF: u32 = 8;

/// Per-sample columns of a filter's error series.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tso3Column {
    Time = 0,
    AttitudeError = 1,
    RateErrorX = 2,
    RateErrorY = 3,
    RateErrorZ = 4,
    GroupError = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct Tso3FilterSummary {
    pub steady_state_mean_e_r_rad: f64,
    pub steady_state_std_e_r_rad: f64,
    pub steady_state_mean_e_omega_rad_s: f64,
    pub steady_state_std_e_omega_rad_s: f64,
    /// Negative when the filter never settles.
    pub convergence_time_s: f64,
    pub max_group_error: f64,
    pub diverged: bool,
    /// Negative when the filter did not diverge.
    pub divergence_time_s: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct Tso3PfDiagnostics {
    pub trace_m: f64,
    pub sigma_star: f64,
    pub final_sigma: f64,
    pub prediction_penalty: f64,
    pub horizon_s: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct Tso3TuningResult {
    pub target_variance: f64,
    pub best_sigma: f64,
    pub best_sigma_star: f64,
    pub rounds: usize,
    pub settled: bool,
}

/// One property check. `name` stays valid while the report lives.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct Tso3CheckEntry {
    pub name: *const c_char,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
}

/// Opaque experiment configuration.
pub struct Tso3Config(ExperimentConfig);

/// Opaque result of one run.
pub struct Tso3RunResult(RunResult);

/// Opaque property-check report.
pub struct Tso3CheckReport {
    report: CheckReport,
    names: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(Tso3Status, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            _ if e.is_divergence() => Tso3Status::Divergence,
            Error::Io(_) | Error::Csv(_) | Error::MalformedResult(_) => Tso3Status::Io,
            Error::WindowTooShort { .. } => Tso3Status::InvalidArgument,
            _ => Tso3Status::InvalidConfig,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: Tso3Status, message: impl Into<String>) -> Failure {
    Failure(status, message.into())
}

/// Runs `body`, converting errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> Tso3Status {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_last_error("");
            Tso3Status::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal panic: {message}"));
            Tso3Status::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(Tso3Status::NullPointer, "null handle"))
}

unsafe fn borrow_mut<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| fail(Tso3Status::NullPointer, "null pointer"))
}

unsafe fn string<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(Tso3Status::NullPointer, "null string"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(Tso3Status::InvalidArgument, "string is not UTF-8"))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    *borrow_mut(out)? = Box::into_raw(Box::new(value));
    Ok(())
}

fn kind(f: Tso3Filter) -> FilterKind {
    match f {
        Tso3Filter::Ekf => FilterKind::Ekf,
        Tso3Filter::Ukf => FilterKind::Ukf,
        Tso3Filter::Mef => FilterKind::Mef,
        Tso3Filter::Pf => FilterKind::Pf,
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn tso3_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library name and version, static storage.
#[no_mangle]
pub extern "C" fn tso3_version() -> *const c_char {
    static VERSION: &str = concat!("tso3 ", env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Parses a JSON configuration; unknown fields are rejected.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tso3_config_from_json(
    json: *const c_char,
    out: *mut *mut Tso3Config,
) -> Tso3Status {
    guard(|| {
        let cfg = ExperimentConfig::from_json(string(json)?)?;
        cfg.validate()?;
        put(out, Tso3Config(cfg))
    })
}

/// Built-in configuration of one case and variant.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tso3_config_preset(
    platform: Tso3Platform,
    variant: Tso3Variant,
    out: *mut *mut Tso3Config,
) -> Tso3Status {
    guard(|| {
        let platform = match platform {
            Tso3Platform::Uav => Platform::Uav,
            Tso3Platform::Satellite => Platform::Satellite,
        };
        let variant = match variant {
            Tso3Variant::ProcessNoise => Variant::ProcessNoise,
            Tso3Variant::Deterministic => Variant::Deterministic,
        };
        put(out, Tso3Config(ExperimentConfig::preset(platform, variant)))
    })
}

/// Serializes a configuration; release the string with [`tso3_string_free`].
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tso3_config_to_json(
    config: *const Tso3Config,
    out: *mut *mut c_char,
) -> Tso3Status {
    guard(|| {
        let json = borrow(config)?.0.to_json()?;
        let c = CString::new(json)
            .map_err(|_| fail(Tso3Status::InvalidConfig, "JSON holds a NUL byte"))?;
        *borrow_mut(out)? = c.into_raw();
        Ok(())
    })
}

/// Shifts every random seed of the configuration by `offset`.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tso3_config_set_seed_offset(
    config: *mut Tso3Config,
    offset: u64,
) -> Tso3Status {
    guard(|| {
        let c = borrow_mut(config)?;
        c.0 = c.0.with_seed_offset(offset);
        Ok(())
    })
}

/// Sets the simulated duration in seconds.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tso3_config_set_duration(
    config: *mut Tso3Config,
    seconds: f64,
) -> Tso3Status {
    guard(|| {
        let c = borrow_mut(config)?;
        let mut next = c.0.clone();
        next.horizon_s = seconds;
        next.validate()?;
        c.0 = next;
        Ok(())
    })
}

/// Keeps only the filters whose `TSO3_MASK_*` bits are set.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tso3_config_select_filters(
    config: *mut Tso3Config,
    mask: u32,
) -> Tso3Status {
    guard(|| {
        let c = borrow_mut(config)?;
        let keep: Vec<FilterKind> = [
            (TSO3_MASK_EKF, FilterKind::Ekf),
            (TSO3_MASK_UKF, FilterKind::Ukf),
            (TSO3_MASK_MEF, FilterKind::Mef),
            (TSO3_MASK_PF, FilterKind::Pf),
        ]
        .into_iter()
        .filter(|(bit, _)| mask & bit != 0)
        .map(|(_, k)| k)
        .collect();
        let mut next = c.0.clone();
        next.filters.retain(&keep);
        next.validate()?;
        c.0 = next;
        Ok(())
    })
}

/// Sets the PF model-error penalty `Σ = sigma·I`.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tso3_config_set_pf_correction_penalty(
    config: *mut Tso3Config,
    sigma: f64,
) -> Tso3Status {
    guard(|| {
        let c = borrow_mut(config)?;
        let pf =
            c.0.filters
                .pf
                .as_mut()
                .ok_or_else(|| fail(Tso3Status::NotFound, "configuration has no pf block"))?;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(fail(
                Tso3Status::InvalidArgument,
                "penalty must be positive and finite",
            ));
        }
        pf.correction_penalty = sigma;
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tso3_config_free(config: *mut Tso3Config) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn tso3_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Simulates one trajectory and runs every selected filter on it. A filter
/// that diverges still yields a result; check `diverged` in its summary.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tso3_run(
    config: *const Tso3Config,
    out: *mut *mut Tso3RunResult,
) -> Tso3Status {
    guard(|| {
        let r = run_case(&borrow(config)?.0)?;
        put(out, Tso3RunResult(r))
    })
}

/// Loads a result directory written by [`tso3_result_write`] or the CLI.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tso3_result_read(
    dir: *const c_char,
    out: *mut *mut Tso3RunResult,
) -> Tso3Status {
    guard(|| {
        let r = read_run(Path::new(string(dir)?))?;
        put(out, Tso3RunResult(r))
    })
}

/// Writes one CSV per filter and a JSON summary into `dir`.
///
/// # Safety
/// `result` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tso3_result_write(
    result: *const Tso3RunResult,
    dir: *const c_char,
) -> Tso3Status {
    guard(|| Ok(write_run(&borrow(result)?.0, Path::new(string(dir)?))?))
}

/// # Safety
/// `result` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tso3_result_summary(
    result: *const Tso3RunResult,
    filter: Tso3Filter,
    out: *mut Tso3FilterSummary,
) -> Tso3Status {
    guard(|| {
        let s = borrow(result)?
            .0
            .summary(kind(filter))
            .ok_or_else(|| fail(Tso3Status::NotFound, format!("{filter:?} did not run")))?;
        *borrow_mut(out)? = Tso3FilterSummary {
            steady_state_mean_e_r_rad: s.steady_state_mean_e_r_rad,
            steady_state_std_e_r_rad: s.steady_state_std_e_r_rad,
            steady_state_mean_e_omega_rad_s: s.steady_state_mean_e_omega_rad_s,
            steady_state_std_e_omega_rad_s: s.steady_state_std_e_omega_rad_s,
            convergence_time_s: s.convergence_time_s.unwrap_or(-1.0),
            max_group_error: s.max_group_error,
            diverged: s.divergence.is_some(),
            divergence_time_s: s.divergence.as_ref().map_or(-1.0, |d| d.time_s),
        };
        Ok(())
    })
}

/// Residual statistics of the PF, if it ran to completion.
///
/// # Safety
/// `result` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tso3_result_pf_diagnostics(
    result: *const Tso3RunResult,
    out: *mut Tso3PfDiagnostics,
) -> Tso3Status {
    guard(|| {
        let d = borrow(result)?
            .0
            .pf
            .as_ref()
            .ok_or_else(|| fail(Tso3Status::NotFound, "no PF diagnostics in this result"))?;
        *borrow_mut(out)? = Tso3PfDiagnostics {
            trace_m: d.trace_m,
            sigma_star: d.sigma_star,
            final_sigma: d.final_sigma,
            prediction_penalty: d.prediction_penalty,
            horizon_s: d.horizon_s,
        };
        Ok(())
    })
}

/// Number of recorded samples of one filter.
///
/// # Safety
/// `result` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tso3_result_series_len(
    result: *const Tso3RunResult,
    filter: Tso3Filter,
    out: *mut usize,
) -> Tso3Status {
    guard(|| {
        let s = borrow(result)?
            .0
            .series(kind(filter))
            .ok_or_else(|| fail(Tso3Status::NotFound, format!("{filter:?} did not run")))?;
        *borrow_mut(out)? = s.len();
        Ok(())
    })
}

/// Copies one column into `buffer`, which must hold exactly the series length.
///
/// # Safety
/// `result` must be a live handle and `buffer` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn tso3_result_copy_column(
    result: *const Tso3RunResult,
    filter: Tso3Filter,
    column: Tso3Column,
    buffer: *mut f64,
    len: usize,
) -> Tso3Status {
    guard(|| {
        let s = borrow(result)?
            .0
            .series(kind(filter))
            .ok_or_else(|| fail(Tso3Status::NotFound, format!("{filter:?} did not run")))?;
        if buffer.is_null() {
            return Err(fail(Tso3Status::NullPointer, "null buffer"));
        }
        if len != s.len() {
            return Err(fail(
                Tso3Status::InvalidArgument,
                format!("buffer holds {len} values, series has {}", s.len()),
            ));
        }
        let out = std::slice::from_raw_parts_mut(buffer, len);
        for (i, o) in out.iter_mut().enumerate() {
            *o = match column {
                Tso3Column::Time => s.times_s[i],
                Tso3Column::AttitudeError => s.e_r_rad[i],
                Tso3Column::RateErrorX => s.e_omega_rad_s[i][0],
                Tso3Column::RateErrorY => s.e_omega_rad_s[i][1],
                Tso3Column::RateErrorZ => s.e_omega_rad_s[i][2],
                Tso3Column::GroupError => s.group_error[i],
            };
        }
        Ok(())
    })
}

/// Amplitude of one rate-error component at `frequency_hz` (nearest bin)
/// over the window `[t0, t1]`.
///
/// # Safety
/// `result` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tso3_result_spectrum_magnitude(
    result: *const Tso3RunResult,
    filter: Tso3Filter,
    component: usize,
    t0: f64,
    t1: f64,
    frequency_hz: f64,
    out: *mut f64,
) -> Tso3Status {
    guard(|| {
        if component > 2 {
            return Err(fail(
                Tso3Status::InvalidArgument,
                "component must be 0, 1 or 2",
            ));
        }
        let report = spectral_analysis(&borrow(result)?.0, [t0, t1])?;
        let f = report.filter(kind(filter)).ok_or_else(|| {
            fail(
                Tso3Status::NotFound,
                format!("{filter:?} does not cover the window"),
            )
        })?;
        *borrow_mut(out)? = f.components[component].magnitude_at(frequency_hz);
        Ok(())
    })
}

/// # Safety
/// `result` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tso3_result_free(result: *mut Tso3RunResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Runs the PF of `config` alone at penalty `sigma`.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tso3_pf_run(
    config: *const Tso3Config,
    sigma: f64,
    out: *mut Tso3PfDiagnostics,
) -> Tso3Status {
    guard(|| {
        let d = pf_run(&borrow(config)?.0, sigma)?;
        *borrow_mut(out)? = Tso3PfDiagnostics {
            trace_m: d.trace_m,
            sigma_star: d.sigma_star,
            final_sigma: d.final_sigma,
            prediction_penalty: d.prediction_penalty,
            horizon_s: d.horizon_s,
        };
        Ok(())
    })
}

/// Adjusts the PF penalty against the residual-variance target.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tso3_tune_pf(
    config: *const Tso3Config,
    out: *mut Tso3TuningResult,
) -> Tso3Status {
    guard(|| {
        let t = tune_pf(&borrow(config)?.0)?;
        *borrow_mut(out)? = Tso3TuningResult {
            target_variance: t.target_variance,
            best_sigma: t.best_sigma,
            best_sigma_star: t.best_sigma_star,
            rounds: t.rounds.len(),
            settled: t.settled,
        };
        Ok(())
    })
}

/// Runs the property checks.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tso3_check_suite(out: *mut *mut Tso3CheckReport) -> Tso3Status {
    guard(|| {
        let report = check_suite();
        let names = report
            .entries
            .iter()
            .map(|e| CString::new(e.name.replace('\0', " ")).unwrap_or_default())
            .collect();
        put(out, Tso3CheckReport { report, names })
    })
}

/// Number of entries, or 0 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tso3_check_count(report: *const Tso3CheckReport) -> usize {
    report.as_ref().map_or(0, |r| r.report.entries.len())
}

/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tso3_check_entry(
    report: *const Tso3CheckReport,
    index: usize,
    out: *mut Tso3CheckEntry,
) -> Tso3Status {
    guard(|| {
        let r = borrow(report)?;
        let e = r.report.entries.get(index).ok_or_else(|| {
            fail(
                Tso3Status::InvalidArgument,
                format!("index {index} out of range"),
            )
        })?;
        *borrow_mut(out)? = Tso3CheckEntry {
            name: r.names[index].as_ptr(),
            passed: e.passed,
            measured: e.measured,
            threshold: e.threshold,
        };
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tso3_check_free(report: *mut Tso3CheckReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
