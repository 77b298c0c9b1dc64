//! C ABI over the scenario pipeline.
//!
//! A scenario handle owns a parsed config and the outputs of its last run.
//! Every entry point returns an [`EakrStatus`]; on failure the message is
//! kept per thread and read back with [`eakr_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use eakroute::config::ScenarioConfig;
use eakroute::scenario::{run_scenario, Command, ReportBundle, ScenarioError};

/// Result of every call. Values 3 to 8 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EakrStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Unreachable = 4,
    NonConvergence = 5,
    Protocol = 6,
    Io = 7,
    ModeMismatch = 8,
    Simulation = 9,
    UnknownCommand = 10,
    NotRun = 11,
    NoSuchFile = 12,
    Panic = 13,
}

/// Opaque to C callers.
pub struct EakrScenario {
    config: ScenarioConfig,
    last: Option<ReportBundle>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    // Interior NULs would truncate the message on the C side anyway.
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: EakrStatus, msg: impl Into<String>) -> EakrStatus {
    set_error(msg);
    status
}

fn status_of(err: &ScenarioError) -> EakrStatus {
    match err.kind() {
        "config" | "model" | "unknown_node" => EakrStatus::Config,
        "unreachable" => EakrStatus::Unreachable,
        "non_convergence" => EakrStatus::NonConvergence,
        "protocol" => EakrStatus::Protocol,
        "io" => EakrStatus::Io,
        "mode_mismatch" => EakrStatus::ModeMismatch,
        _ => EakrStatus::Simulation,
    }
}

fn parse_command(name: &str) -> Option<Command> {
    Some(match name {
        "generate" => Command::Generate,
        "eka" => Command::Eka,
        "keys" => Command::Keys,
        "routes" => Command::Routes,
        "mc" => Command::Mc,
        "adversary" => Command::Adversary,
        "all" => Command::All,
        _ => return None,
    })
}

/// Runs `f` with panics turned into `EakrStatus::Panic`.
fn guard(f: impl FnOnce() -> Result<(), EakrStatus>) -> EakrStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EakrStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(EakrStatus::Panic, msg)
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, EakrStatus> {
    if p.is_null() {
        return Err(fail(EakrStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(EakrStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a>(h: *mut EakrScenario) -> Result<&'a mut EakrScenario, EakrStatus> {
    h.as_mut().ok_or_else(|| fail(EakrStatus::NullArgument, "scenario handle is null"))
}

fn give_string(text: &str, out: *mut *mut c_char) -> Result<(), EakrStatus> {
    let c = CString::new(text).map_err(|_| fail(EakrStatus::InvalidUtf8, "output contains a NUL byte"))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Parses a JSON scenario config. On success `*out` receives a handle that
/// must be released with `eakr_scenario_free`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eakr_scenario_from_json(json: *const c_char, out: *mut *mut EakrScenario) -> EakrStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(EakrStatus::NullArgument, "out is null"));
        }
        *out = ptr::null_mut();
        let text = str_arg(json, "json")?;
        let config = ScenarioConfig::from_json(text).map_err(|e| fail(EakrStatus::Config, e.to_string()))?;
        *out = Box::into_raw(Box::new(EakrScenario { config, last: None }));
        Ok(())
    })
}

/// Overrides the master seed. Clears any previous run.
///
/// # Safety
/// `h` must come from `eakr_scenario_from_json`.
#[no_mangle]
pub unsafe extern "C" fn eakr_scenario_set_seed(h: *mut EakrScenario, seed: u64) -> EakrStatus {
    guard(|| {
        let s = handle(h)?;
        s.config.seed = seed;
        s.last = None;
        Ok(())
    })
}

/// Runs one pipeline command: generate, eka, keys, routes, mc, adversary
/// or all. Outputs stay in the handle until the next run.
///
/// # Safety
/// `h` must come from `eakr_scenario_from_json`; `command` must be a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn eakr_scenario_run(h: *mut EakrScenario, command: *const c_char) -> EakrStatus {
    guard(|| {
        let s = handle(h)?;
        let name = str_arg(command, "command")?;
        let cmd = parse_command(name).ok_or_else(|| fail(EakrStatus::UnknownCommand, format!("unknown command `{name}`")))?;
        s.last = None;
        let bundle = run_scenario(&s.config, cmd).map_err(|e| fail(status_of(&e), e.to_string()))?;
        s.last = Some(bundle);
        Ok(())
    })
}

/// Number of files produced by the last run.
///
/// # Safety
/// `h` must come from `eakr_scenario_from_json`; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn eakr_scenario_file_count(h: *const EakrScenario, out: *mut usize) -> EakrStatus {
    guard(|| {
        let s = handle(h as *mut EakrScenario)?;
        if out.is_null() {
            return Err(fail(EakrStatus::NullArgument, "out is null"));
        }
        let bundle = s.last.as_ref().ok_or_else(|| fail(EakrStatus::NotRun, "no run yet"))?;
        *out = bundle.files.len();
        Ok(())
    })
}

/// Name of the `index`-th output file in sorted order. Free the result
/// with `eakr_string_free`.
///
/// # Safety
/// `h` must come from `eakr_scenario_from_json`; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn eakr_scenario_file_name(h: *const EakrScenario, index: usize, out: *mut *mut c_char) -> EakrStatus {
    guard(|| {
        let s = handle(h as *mut EakrScenario)?;
        if out.is_null() {
            return Err(fail(EakrStatus::NullArgument, "out is null"));
        }
        let bundle = s.last.as_ref().ok_or_else(|| fail(EakrStatus::NotRun, "no run yet"))?;
        let name = bundle
            .files
            .keys()
            .nth(index)
            .ok_or_else(|| fail(EakrStatus::NoSuchFile, format!("index {index} out of range")))?;
        give_string(name, out)
    })
}

/// Contents of one output file, e.g. "eak.json". Free the result with
/// `eakr_string_free`.
///
/// # Safety
/// `h` must come from `eakr_scenario_from_json`; `name` must be a
/// NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn eakr_scenario_file(h: *const EakrScenario, name: *const c_char, out: *mut *mut c_char) -> EakrStatus {
    guard(|| {
        let s = handle(h as *mut EakrScenario)?;
        let name = str_arg(name, "name")?;
        if out.is_null() {
            return Err(fail(EakrStatus::NullArgument, "out is null"));
        }
        let bundle = s.last.as_ref().ok_or_else(|| fail(EakrStatus::NotRun, "no run yet"))?;
        let text = bundle
            .files
            .get(name)
            .ok_or_else(|| fail(EakrStatus::NoSuchFile, format!("no output named `{name}`")))?;
        give_string(text, out)
    })
}

/// SHA-256 manifest of the last run's outputs.
///
/// # Safety
/// `h` must come from `eakr_scenario_from_json`; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn eakr_scenario_manifest(h: *const EakrScenario, out: *mut *mut c_char) -> EakrStatus {
    guard(|| {
        let s = handle(h as *mut EakrScenario)?;
        if out.is_null() {
            return Err(fail(EakrStatus::NullArgument, "out is null"));
        }
        let bundle = s.last.as_ref().ok_or_else(|| fail(EakrStatus::NotRun, "no run yet"))?;
        give_string(&bundle.manifest(), out)
    })
}

/// Writes the last run's outputs into `dir`, creating it if needed.
///
/// # Safety
/// `h` must come from `eakr_scenario_from_json`; `dir` must be a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn eakr_scenario_write(h: *const EakrScenario, dir: *const c_char) -> EakrStatus {
    guard(|| {
        let s = handle(h as *mut EakrScenario)?;
        let dir = str_arg(dir, "dir")?;
        let bundle = s.last.as_ref().ok_or_else(|| fail(EakrStatus::NotRun, "no run yet"))?;
        bundle.write_to(Path::new(dir)).map_err(|e| fail(status_of(&e), e.to_string()))
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `h` must come from `eakr_scenario_from_json` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn eakr_scenario_free(h: *mut EakrScenario) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn eakr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn eakr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn eakr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
