//! C interface to `mmimo-core`.
//!
//! Every fallible function returns an [`MmimoStatus`]; on failure a message is
//! available from [`mmimo_last_error`] on the same thread. Objects are handed
//! out as opaque pointers and must be released with the matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mmimo_core::combining;
use mmimo_core::detequiv;
use mmimo_core::harness::{self, ExperimentResult, RunOptions};
use mmimo_core::network::NetworkConfig;
use mmimo_core::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MmimoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidString = 2,
    Config = 3,
    InvalidInput = 4,
    NonConvergence = 5,
    Numerical = 6,
    Io = 7,
    Serialization = 8,
    OutOfRange = 9,
    Panic = 10,
}

/// Network configuration handle.
pub struct MmimoConfig(NetworkConfig);

/// Experiment result handle.
pub struct MmimoResult(ExperimentResult);

/// Per-UE values. Quantities not computed by the run are NaN.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct MmimoUe {
    pub drop: usize,
    pub cell: usize,
    pub ue: usize,
    pub mean_sinr_mc: f64,
    pub sinr_std_err_mc: f64,
    pub gamma_bar: f64,
    pub se_mc: f64,
    pub se_detequiv: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct MmimoUncorrelated {
    pub nu: f64,
    pub mu_star: f64,
    pub noise: f64,
    pub non_coherent: f64,
    pub coherent: f64,
    pub gamma_bar: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct MmimoComplexity {
    pub quadratic_estimation: u64,
    pub quadratic_gamma: u64,
    pub mse_estimation: u64,
    pub mse_gamma: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MmimoStatus {
    match e {
        Error::Config(_) => MmimoStatus::Config,
        Error::InvalidInput(_) => MmimoStatus::InvalidInput,
        Error::NonConvergence { .. } => MmimoStatus::NonConvergence,
        Error::NotPositiveDefinite(_) | Error::Indefinite { .. } | Error::NonFiniteSinr { .. } => MmimoStatus::Numerical,
        Error::Io(_) => MmimoStatus::Io,
        Error::Serialization(_) => MmimoStatus::Serialization,
    }
}

fn fail(status: MmimoStatus, msg: impl Into<String>) -> MmimoStatus {
    set_error(msg.into());
    status
}

fn guard(f: impl FnOnce() -> Result<(), MmimoStatus>) -> MmimoStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MmimoStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(MmimoStatus::Panic, "internal panic"),
    }
}

fn core<T>(r: mmimo_core::Result<T>) -> Result<T, MmimoStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, MmimoStatus> {
    p.as_ref().ok_or_else(|| fail(MmimoStatus::NullPointer, format!("{what} is null")))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, MmimoStatus> {
    p.as_mut().ok_or_else(|| fail(MmimoStatus::NullPointer, format!("{what} is null")))
}

/// Message of the last failure on this thread, or null. Valid until the next
/// call into the library on the same thread.
#[no_mangle]
pub extern "C" fn mmimo_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a configuration with the built-in defaults.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mmimo_config_default(out: *mut *mut MmimoConfig) -> MmimoStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = Box::into_raw(Box::new(MmimoConfig(NetworkConfig::default())));
        Ok(())
    })
}

/// Parses a TOML configuration.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mmimo_config_from_toml(text: *const c_char, out: *mut *mut MmimoConfig) -> MmimoStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        if text.is_null() {
            return Err(fail(MmimoStatus::NullPointer, "text is null"));
        }
        let text = CStr::from_ptr(text)
            .to_str()
            .map_err(|e| fail(MmimoStatus::InvalidString, e.to_string()))?;
        let config = core(NetworkConfig::from_toml_str(text))?;
        *out = Box::into_raw(Box::new(MmimoConfig(config)));
        Ok(())
    })
}

/// Sets `L`, `K` and `M`.
///
/// # Safety
/// `config` must come from this library and not be freed.
#[no_mangle]
pub unsafe extern "C" fn mmimo_config_set_dims(config: *mut MmimoConfig, cells: usize, ues_per_cell: usize, antennas: usize) -> MmimoStatus {
    guard(|| {
        let c = &mut deref_mut(config, "config")?.0;
        let next = NetworkConfig {
            cells,
            ues_per_cell,
            antennas,
            ..c.clone()
        };
        core(next.validate())?;
        *c = next;
        Ok(())
    })
}

/// # Safety
/// `config` must come from this library and not be freed.
#[no_mangle]
pub unsafe extern "C" fn mmimo_config_set_seed(config: *mut MmimoConfig, seed: u64) -> MmimoStatus {
    guard(|| {
        deref_mut(config, "config")?.0.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `config` must be null or come from this library, and is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn mmimo_config_free(config: *mut MmimoConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

unsafe fn run(
    config: *const MmimoConfig,
    opts: RunOptions,
    engine: fn(&NetworkConfig, &RunOptions) -> mmimo_core::Result<ExperimentResult>,
    out: *mut *mut MmimoResult,
) -> MmimoStatus {
    guard(|| {
        let config = &deref(config, "config")?.0;
        let out = deref_mut(out, "out")?;
        let result = core(engine(config, &opts))?;
        *out = Box::into_raw(Box::new(MmimoResult(result)));
        Ok(())
    })
}

/// Monte Carlo run over `drops` network drops of `blocks` coherence blocks.
/// `threads = 0` uses every core.
///
/// # Safety
/// `config` must come from this library; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mmimo_run_monte_carlo(
    config: *const MmimoConfig,
    blocks: usize,
    drops: usize,
    threads: usize,
    out: *mut *mut MmimoResult,
) -> MmimoStatus {
    let opts = RunOptions {
        blocks,
        drops,
        threads,
        ..RunOptions::default()
    };
    run(config, opts, harness::run_monte_carlo, out)
}

/// Deterministic-equivalent run over `drops` network drops.
///
/// # Safety
/// `config` must come from this library; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mmimo_run_detequiv(config: *const MmimoConfig, drops: usize, threads: usize, out: *mut *mut MmimoResult) -> MmimoStatus {
    let opts = RunOptions {
        drops,
        threads,
        ..RunOptions::default()
    };
    run(config, opts, harness::run_detequiv, out)
}

/// Number of per-UE entries in a result.
///
/// # Safety
/// `result` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn mmimo_result_ue_count(result: *const MmimoResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.ues.len())
}

/// # Safety
/// `result` must come from this library; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mmimo_result_ue(result: *const MmimoResult, index: usize, out: *mut MmimoUe) -> MmimoStatus {
    guard(|| {
        let r = &deref(result, "result")?.0;
        let out = deref_mut(out, "out")?;
        let u = r
            .ues
            .get(index)
            .ok_or_else(|| fail(MmimoStatus::OutOfRange, format!("UE index {index} out of range")))?;
        let mc = u.mc.as_ref();
        let de = u.de.as_ref();
        *out = MmimoUe {
            drop: u.drop,
            cell: u.cell,
            ue: u.ue,
            mean_sinr_mc: mc.map_or(f64::NAN, |m| m.mean_sinr),
            sinr_std_err_mc: mc.map_or(f64::NAN, |m| m.sinr_std_err),
            gamma_bar: de.map_or(f64::NAN, |d| d.gamma_bar),
            se_mc: mc.map_or(f64::NAN, |m| m.se),
            se_detequiv: de.map_or(f64::NAN, |d| d.se),
        };
        Ok(())
    })
}

/// Average sum SE per cell; NaN for an engine that was not run.
///
/// # Safety
/// `result` must come from this library; the outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mmimo_result_sum_se(result: *const MmimoResult, mc: *mut f64, detequiv: *mut f64) -> MmimoStatus {
    guard(|| {
        let r = &deref(result, "result")?.0;
        *deref_mut(mc, "mc")? = r.sum_se_mc.unwrap_or(f64::NAN);
        *deref_mut(detequiv, "detequiv")? = r.sum_se_detequiv.unwrap_or(f64::NAN);
        Ok(())
    })
}

/// Serializes a result as JSON. Release the string with [`mmimo_string_free`].
///
/// # Safety
/// `result` must come from this library; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mmimo_result_to_json(result: *const MmimoResult, out: *mut *mut c_char) -> MmimoStatus {
    guard(|| {
        let r = &deref(result, "result")?.0;
        let out = deref_mut(out, "out")?;
        let text = serde_json::to_string(r).map_err(|e| fail(MmimoStatus::Serialization, e.to_string()))?;
        let c = CString::new(text).map_err(|e| fail(MmimoStatus::Serialization, e.to_string()))?;
        *out = c.into_raw();
        Ok(())
    })
}

/// # Safety
/// `result` must be null or come from this library, and is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn mmimo_result_free(result: *mut MmimoResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn mmimo_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Closed form of the uncorrelated model `R_jji = I`, `R_jli = alpha I`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mmimo_closed_form_uncorrelated(
    antennas: usize,
    ues_per_cell: usize,
    cells: usize,
    alpha: f64,
    rho: f64,
    rho_tr: f64,
    out: *mut MmimoUncorrelated,
) -> MmimoStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let cf = core(detequiv::closed_form_uncorrelated(antennas, ues_per_cell, cells, alpha, rho, rho_tr))?;
        *out = MmimoUncorrelated {
            nu: cf.nu,
            mu_star: cf.mu_star,
            noise: cf.noise,
            non_coherent: cf.non_coherent,
            coherent: cf.coherent,
            gamma_bar: cf.gamma_bar,
        };
        Ok(())
    })
}

/// Complex multiplications per coherence block for the two SINR routes.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mmimo_complexity_counts(antennas: u64, ues_per_cell: u64, cells: u64, tau_p: u64, out: *mut MmimoComplexity) -> MmimoStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let c = core(combining::complexity_counts(antennas, ues_per_cell, cells, tau_p))?;
        let narrow = |x: u128| u64::try_from(x).map_err(|_| fail(MmimoStatus::OutOfRange, "count exceeds 64 bits"));
        *out = MmimoComplexity {
            quadratic_estimation: narrow(c.quadratic.estimation)?,
            quadratic_gamma: narrow(c.quadratic.gamma)?,
            mse_estimation: narrow(c.mse.estimation)?,
            mse_gamma: narrow(c.mse.gamma)?,
        };
        Ok(())
    })
}
