//! C interface to the blochgeom solver and verification commands.
//!
//! Every function returns a `BgStatus`; on failure the message is available from
//! `bg_last_error_message` on the same thread. Handles are released with their `_free` function.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::Vector3;

use blochgeom::cli::{
    parse_config, run_command, CliError, CommandKind, ErrorCategory, MethodChoice, RunConfig, RunOptions,
};
use blochgeom::curvature::{curvature_at, Method};
use blochgeom::solver::BlochModel;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Malformed, incomplete or inconsistent configuration.
    Config = 3,
    Physics = 4,
    Computation = 5,
    Io = 6,
    Usage = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BgMethod {
    Kubo = 0,
    Corrected = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BgCommand {
    Bands = 0,
    Curvature = 1,
    DeltaVerify = 2,
    FreeParticle = 3,
    Adiabatic = 4,
    VerifyAll = 5,
}

/// A parsed configuration together with its Bloch model.
pub struct BgModel {
    config: RunConfig,
    model: BlochModel,
}

/// Artifacts and verdict of one command run.
pub struct BgReport {
    pass: bool,
    names: Vec<CString>,
    contents: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: BgStatus, msg: &str) -> BgStatus {
    set_error(msg);
    status
}

fn from_cli(e: CliError) -> BgStatus {
    let status = match e.category {
        ErrorCategory::Physics => BgStatus::Physics,
        ErrorCategory::Computation => BgStatus::Computation,
        ErrorCategory::Io => BgStatus::Io,
        ErrorCategory::Usage => BgStatus::Usage,
        _ => BgStatus::Config,
    };
    fail(status, &e.to_string())
}

fn guard(f: impl FnOnce() -> BgStatus) -> BgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == BgStatus::Ok {
                set_error("");
            }
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(BgStatus::Panic, &msg)
        }
    }
}

/// `s` must be null or a NUL-terminated string.
unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, BgStatus> {
    if s.is_null() {
        return Err(fail(BgStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(BgStatus::InvalidUtf8, "string argument is not UTF-8"))
}

/// `k` must point to `k_len` doubles.
unsafe fn read_k(model: &BgModel, k: *const f64, k_len: usize) -> Result<Vector3<f64>, BgStatus> {
    if k.is_null() {
        return Err(fail(BgStatus::NullPointer, "null wavevector"));
    }
    let dim = model.config.dimension;
    if k_len != dim {
        return Err(fail(
            BgStatus::Usage,
            &format!("wavevector needs {dim} components, got {k_len}"),
        ));
    }
    let s = std::slice::from_raw_parts(k, k_len);
    let mut v = Vector3::zeros();
    for (i, x) in s.iter().enumerate() {
        v[i] = *x;
    }
    Ok(v)
}

/// Message of the last failed call on this thread; empty after a success. Owned by the library.
#[no_mangle]
pub extern "C" fn bg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses a JSON configuration and builds its model.
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bg_model_from_config_json(json: *const c_char, out: *mut *mut BgModel) -> BgStatus {
    guard(|| {
        if out.is_null() {
            return fail(BgStatus::NullPointer, "null output handle");
        }
        *out = ptr::null_mut();
        let text = match read_str(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let config = match parse_config(text) {
            Ok(c) => c,
            Err(e) => return from_cli(e),
        };
        let model = match config.build_model() {
            Ok(m) => m,
            Err(e) => return from_cli(e),
        };
        *out = Box::into_raw(Box::new(BgModel { config, model }));
        BgStatus::Ok
    })
}

/// `model` must be null or a handle from `bg_model_from_config_json` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bg_model_free(model: *mut BgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bg_model_dimension(model: *const BgModel) -> usize {
    model.as_ref().map_or(0, |m| m.config.dimension)
}

/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bg_model_basis_size(model: *const BgModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.basis().len())
}

/// Lowest `n_bands` energies at `k`, ascending, written to `energies`.
/// `k` must hold `k_len` doubles and `energies` room for `n_bands` doubles.
#[no_mangle]
pub unsafe extern "C" fn bg_model_solve(
    model: *const BgModel,
    k: *const f64,
    k_len: usize,
    n_bands: usize,
    energies: *mut f64,
) -> BgStatus {
    guard(|| {
        let Some(m) = model.as_ref() else {
            return fail(BgStatus::NullPointer, "null model");
        };
        if energies.is_null() {
            return fail(BgStatus::NullPointer, "null energy buffer");
        }
        let k = match read_k(m, k, k_len) {
            Ok(k) => k,
            Err(s) => return s,
        };
        match m.model.solve(&k, n_bands) {
            Ok(sol) => {
                std::slice::from_raw_parts_mut(energies, n_bands).copy_from_slice(&sol.energies);
                BgStatus::Ok
            }
            Err(e) => from_cli(CliError::from(e)),
        }
    })
}

/// Sum-over-states Berry curvature (x, y, z) of `band` at `k` using `n_bands` bands.
/// `k` must hold `k_len` doubles and `omega` room for 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn bg_model_curvature(
    model: *const BgModel,
    k: *const f64,
    k_len: usize,
    band: usize,
    n_bands: usize,
    method: BgMethod,
    omega: *mut f64,
) -> BgStatus {
    guard(|| {
        let Some(m) = model.as_ref() else {
            return fail(BgStatus::NullPointer, "null model");
        };
        if omega.is_null() {
            return fail(BgStatus::NullPointer, "null curvature buffer");
        }
        let k = match read_k(m, k, k_len) {
            Ok(k) => k,
            Err(s) => return s,
        };
        let method = match method {
            BgMethod::Kubo => Method::Kubo,
            BgMethod::Corrected => Method::Corrected,
        };
        let entry = m
            .model
            .solve(&k, n_bands)
            .and_then(|sol| curvature_at(&sol, band, method));
        match entry {
            Ok(e) => {
                std::slice::from_raw_parts_mut(omega, 3).copy_from_slice(e.omega.as_slice());
                BgStatus::Ok
            }
            Err(e) => from_cli(CliError::from(e)),
        }
    })
}

/// Runs a command on a JSON configuration. A null `config_json` is accepted by
/// `BG_COMMAND_VERIFY_ALL` and selects the bundled configurations.
/// `config_json` must be null or NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bg_run_command(
    command: BgCommand,
    config_json: *const c_char,
    seed: u64,
    out: *mut *mut BgReport,
) -> BgStatus {
    guard(|| {
        if out.is_null() {
            return fail(BgStatus::NullPointer, "null output handle");
        }
        *out = ptr::null_mut();
        let config = if config_json.is_null() {
            None
        } else {
            let text = match read_str(config_json) {
                Ok(t) => t,
                Err(s) => return s,
            };
            match parse_config(text) {
                Ok(c) => Some(c),
                Err(e) => return from_cli(e),
            }
        };
        let kind = match command {
            BgCommand::Bands => CommandKind::Bands,
            BgCommand::Curvature => CommandKind::Curvature,
            BgCommand::DeltaVerify => CommandKind::DeltaVerify,
            BgCommand::FreeParticle => CommandKind::FreeParticle,
            BgCommand::Adiabatic => CommandKind::Adiabatic,
            BgCommand::VerifyAll => CommandKind::VerifyAll,
        };
        let opts = RunOptions {
            method: MethodChoice::All,
            seed,
        };
        let outcome = match run_command(kind, config.as_ref(), &opts) {
            Ok(o) => o,
            Err(e) => return from_cli(e),
        };
        let cstr = |s: &str| CString::new(s.replace('\0', " ")).unwrap_or_default();
        let report = BgReport {
            pass: outcome.pass,
            names: outcome.artifacts.iter().map(|a| cstr(&a.name)).collect(),
            contents: outcome.artifacts.iter().map(|a| cstr(&a.contents)).collect(),
        };
        *out = Box::into_raw(Box::new(report));
        BgStatus::Ok
    })
}

/// `report` must be null or a handle from `bg_run_command` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bg_report_free(report: *mut BgReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// 1 when every asserted check passed, 0 otherwise or for a null handle.
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bg_report_pass(report: *const BgReport) -> i32 {
    report.as_ref().map_or(0, |r| i32::from(r.pass))
}

/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bg_report_artifact_count(report: *const BgReport) -> usize {
    report.as_ref().map_or(0, |r| r.names.len())
}

/// File name of artifact `i`, or null when out of range. Valid until the report is freed.
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bg_report_artifact_name(report: *const BgReport, i: usize) -> *const c_char {
    report
        .as_ref()
        .and_then(|r| r.names.get(i))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// Text of artifact `i`, or null when out of range. Valid until the report is freed.
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bg_report_artifact_contents(report: *const BgReport, i: usize) -> *const c_char {
    report
        .as_ref()
        .and_then(|r| r.contents.get(i))
        .map_or(ptr::null(), |s| s.as_ptr())
}
