//! C ABI for the mpqkd crate: opaque handles, integer error codes, and
//! double-valued report accessors. See `include/mpqkd.h` for the header.
//!
//! Conventions:
//! - Every fallible function returns an `int32_t` status (`MPQKD_OK` = 0).
//! - Output parameters are written only on success.
//! - Handles are created and destroyed exclusively through this API.
//! - All functions are panic-safe: a caught panic maps to `MPQKD_ERR_PANIC`.

use std::ffi::{c_char, c_int, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use mpqkd::config::{Mode, ProtocolConfig};
use mpqkd::keyrate::KeyRateReport;
use mpqkd::protosim::{estimate_pipeline, simulate, GainSource};
use mpqkd::MpqkdError;

pub const MPQKD_OK: c_int = 0;
pub const MPQKD_ERR_TRUNCATION: c_int = -1;
pub const MPQKD_ERR_INVALID_CONFIG: c_int = -2;
pub const MPQKD_ERR_DEGENERATE_DECOY: c_int = -3;
pub const MPQKD_ERR_PHOTON_ABOVE_CUTOFF: c_int = -4;
pub const MPQKD_ERR_ABORT_RATE: c_int = -5;
pub const MPQKD_ERR_IO: c_int = -6;
pub const MPQKD_ERR_JSON: c_int = -7;
pub const MPQKD_ERR_NULL_POINTER: c_int = -8;
pub const MPQKD_ERR_UTF8: c_int = -9;
pub const MPQKD_ERR_UNKNOWN_FIELD: c_int = -10;
pub const MPQKD_ERR_PANIC: c_int = -11;

fn code_of(e: &MpqkdError) -> c_int {
    match e {
        MpqkdError::Truncation { .. } => MPQKD_ERR_TRUNCATION,
        MpqkdError::InvalidConfig { .. } => MPQKD_ERR_INVALID_CONFIG,
        MpqkdError::DegenerateDecoy => MPQKD_ERR_DEGENERATE_DECOY,
        MpqkdError::PhotonAboveCutoff { .. } => MPQKD_ERR_PHOTON_ABOVE_CUTOFF,
        MpqkdError::AbortRate => MPQKD_ERR_ABORT_RATE,
        MpqkdError::Io(_) => MPQKD_ERR_IO,
        MpqkdError::Json(_) => MPQKD_ERR_JSON,
    }
}

/// Opaque configuration handle.
pub struct MpqkdConfig(ProtocolConfig);
/// Opaque key-rate report handle.
pub struct MpqkdReport(KeyRateReport);

/// Static description of a status code; never returns NULL.
#[no_mangle]
pub extern "C" fn mpqkd_strerror(code: c_int) -> *const c_char {
    let s: &'static [u8] = match code {
        MPQKD_OK => b"ok\0",
        MPQKD_ERR_TRUNCATION => b"truncation\0",
        MPQKD_ERR_INVALID_CONFIG => b"invalid-config\0",
        MPQKD_ERR_DEGENERATE_DECOY => b"degenerate-decoy\0",
        MPQKD_ERR_PHOTON_ABOVE_CUTOFF => b"photon-above-cutoff\0",
        MPQKD_ERR_ABORT_RATE => b"abort-rate\0",
        MPQKD_ERR_IO => b"io\0",
        MPQKD_ERR_JSON => b"json\0",
        MPQKD_ERR_NULL_POINTER => b"null-pointer\0",
        MPQKD_ERR_UTF8 => b"invalid-utf8\0",
        MPQKD_ERR_UNKNOWN_FIELD => b"unknown-field\0",
        MPQKD_ERR_PANIC => b"internal-panic\0",
        _ => b"unknown-code\0",
    };
    s.as_ptr() as *const c_char
}

/// Creates a configuration with the library defaults.
#[no_mangle]
pub extern "C" fn mpqkd_config_default() -> *mut MpqkdConfig {
    Box::into_raw(Box::new(MpqkdConfig(ProtocolConfig::default())))
}

/// Parses flat `key = value` text into a new configuration handle.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mpqkd_config_parse(
    text: *const c_char,
    out: *mut *mut MpqkdConfig,
) -> c_int {
    if text.is_null() || out.is_null() {
        return MPQKD_ERR_NULL_POINTER;
    }
    let Ok(text) = CStr::from_ptr(text).to_str() else {
        return MPQKD_ERR_UTF8;
    };
    match catch_unwind(|| ProtocolConfig::parse(text)) {
        Ok(Ok(cfg)) => {
            *out = Box::into_raw(Box::new(MpqkdConfig(cfg)));
            MPQKD_OK
        }
        Ok(Err(e)) => code_of(&e),
        Err(_) => MPQKD_ERR_PANIC,
    }
}

/// Sets one configuration key from its textual form (same syntax as the
/// config file, e.g. key "distance_km", value "120").
///
/// # Safety
/// `cfg` must be a live handle from this API; `key`/`value` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mpqkd_config_set(
    cfg: *mut MpqkdConfig,
    key: *const c_char,
    value: *const c_char,
) -> c_int {
    if cfg.is_null() || key.is_null() || value.is_null() {
        return MPQKD_ERR_NULL_POINTER;
    }
    let (Ok(key), Ok(value)) = (CStr::from_ptr(key).to_str(), CStr::from_ptr(value).to_str())
    else {
        return MPQKD_ERR_UTF8;
    };
    let handle = &mut *cfg;
    let mut text = handle.0.to_key_values();
    text.push_str(&format!("{key} = {value}\n"));
    match catch_unwind(|| ProtocolConfig::parse(&text)) {
        Ok(Ok(new_cfg)) => {
            handle.0 = new_cfg;
            MPQKD_OK
        }
        Ok(Err(MpqkdError::InvalidConfig { field, reason })) if reason == "unknown key" => {
            let _ = field;
            MPQKD_ERR_UNKNOWN_FIELD
        }
        Ok(Err(e)) => code_of(&e),
        Err(_) => MPQKD_ERR_PANIC,
    }
}

/// Frees a configuration handle (NULL is a no-op).
///
/// # Safety
/// `cfg` must be NULL or a live handle from this API; it is consumed.
#[no_mangle]
pub unsafe extern "C" fn mpqkd_config_free(cfg: *mut MpqkdConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Computes the analytic key-rate report for the configuration.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mpqkd_analytic_report(
    cfg: *const MpqkdConfig,
    out: *mut *mut MpqkdReport,
) -> c_int {
    if cfg.is_null() || out.is_null() {
        return MPQKD_ERR_NULL_POINTER;
    }
    let cfg = &(*cfg).0;
    match catch_unwind(AssertUnwindSafe(|| {
        estimate_pipeline(GainSource::Analytic, cfg)
    })) {
        Ok(Ok(rep)) => {
            *out = Box::into_raw(Box::new(MpqkdReport(rep)));
            MPQKD_OK
        }
        Ok(Err(e)) => code_of(&e),
        Err(_) => MPQKD_ERR_PANIC,
    }
}

/// Runs the Monte Carlo with the given seed and estimates the report from
/// the tallies. The configuration's `mode` field is ignored here.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mpqkd_simulate_report(
    cfg: *const MpqkdConfig,
    seed: u64,
    out: *mut *mut MpqkdReport,
) -> c_int {
    if cfg.is_null() || out.is_null() {
        return MPQKD_ERR_NULL_POINTER;
    }
    let mut cfg = (*cfg).0.clone();
    cfg.mode = Mode::MonteCarlo;
    cfg.seed = seed;
    match catch_unwind(AssertUnwindSafe(|| {
        let t = simulate(&cfg, seed)?;
        estimate_pipeline(GainSource::Tallies(&t), &cfg)
    })) {
        Ok(Ok(rep)) => {
            *out = Box::into_raw(Box::new(MpqkdReport(rep)));
            MPQKD_OK
        }
        Ok(Err(e)) => code_of(&e),
        Err(_) => MPQKD_ERR_PANIC,
    }
}

/// Reads one named field of a report into `*value`. Known fields:
/// distance_km, l, R, R_star, ratio, e11x, Ez, s11z, q11z, q11z_star,
/// r_p, r_z, r_p_star, r_z_star, p_eff, p_eff_z, f.
///
/// # Safety
/// `report` must be a live handle; `name` NUL-terminated; `value` valid.
#[no_mangle]
pub unsafe extern "C" fn mpqkd_report_get(
    report: *const MpqkdReport,
    name: *const c_char,
    value: *mut f64,
) -> c_int {
    if report.is_null() || name.is_null() || value.is_null() {
        return MPQKD_ERR_NULL_POINTER;
    }
    let Ok(name) = CStr::from_ptr(name).to_str() else {
        return MPQKD_ERR_UTF8;
    };
    let r = &(*report).0;
    let v = match name {
        "distance_km" => r.distance_km,
        "l" => r.l as f64,
        "R" => r.r,
        "R_star" => r.r_star,
        "ratio" => r.ratio(),
        "e11x" => r.e11x,
        "Ez" => r.ez,
        "s11z" => r.s11z,
        "q11z" => r.q11z,
        "q11z_star" => r.q11z_star,
        "r_p" => r.r_p,
        "r_z" => r.r_z,
        "r_p_star" => r.r_p_star,
        "r_z_star" => r.r_z_star,
        "p_eff" => r.p_eff,
        "p_eff_z" => r.p_eff_z,
        "f" => r.f,
        _ => return MPQKD_ERR_UNKNOWN_FIELD,
    };
    *value = v;
    MPQKD_OK
}

/// Frees a report handle (NULL is a no-op).
///
/// # Safety
/// `report` must be NULL or a live handle from this API; it is consumed.
#[no_mangle]
pub unsafe extern "C" fn mpqkd_report_free(report: *mut MpqkdReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
