use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use eakroute_ffi::*;

const LINE: &str =
    r#"{"topology":{"source":"fixture","name":"line"},"mc":{"ns":[1],"fs":[0.5],"trials":2000},"routes":{"delivery_trials":500}}"#;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn open(json: &str) -> *mut EakrScenario {
    let mut h = ptr::null_mut();
    let st = unsafe { eakr_scenario_from_json(cstr(json).as_ptr(), &mut h) };
    assert_eq!(st, EakrStatus::Ok, "{}", last_error());
    assert!(!h.is_null());
    h
}

fn take(p: *mut c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned();
    unsafe { eakr_string_free(p) };
    s
}

fn last_error() -> String {
    let p = eakr_last_error();
    if p.is_null() {
        return String::new();
    }
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn file(h: *mut EakrScenario, name: &str) -> Result<String, EakrStatus> {
    let mut out = ptr::null_mut();
    match unsafe { eakr_scenario_file(h, cstr(name).as_ptr(), &mut out) } {
        EakrStatus::Ok => Ok(take(out)),
        s => Err(s),
    }
}

#[test]
fn run_and_read_outputs() {
    let h = open(LINE);
    assert_eq!(unsafe { eakr_scenario_run(h, cstr("all").as_ptr()) }, EakrStatus::Ok);

    let eak = file(h, "eak.json").unwrap();
    assert!(eak.contains("\"eak\""));

    let mut n = 0usize;
    assert_eq!(unsafe { eakr_scenario_file_count(h, &mut n) }, EakrStatus::Ok);
    let mut names = Vec::new();
    for i in 0..n {
        let mut out = ptr::null_mut();
        assert_eq!(unsafe { eakr_scenario_file_name(h, i, &mut out) }, EakrStatus::Ok);
        names.push(take(out));
    }
    assert!(names.windows(2).all(|w| w[0] < w[1]));
    assert!(names.iter().any(|x| x == "routes.json"));

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { eakr_scenario_file_name(h, n, &mut out) }, EakrStatus::NoSuchFile);

    let mut m = ptr::null_mut();
    assert_eq!(unsafe { eakr_scenario_manifest(h, &mut m) }, EakrStatus::Ok);
    assert!(take(m).contains("eak.json"));

    assert_eq!(file(h, "nope.txt"), Err(EakrStatus::NoSuchFile));
    assert!(last_error().contains("nope.txt"));
    unsafe { eakr_scenario_free(h) };
}

#[test]
fn same_seed_same_bytes() {
    let run = |seed: u64| {
        let h = open(r#"{"topology":{"source":"random","node_count":40}}"#);
        unsafe {
            assert_eq!(eakr_scenario_set_seed(h, seed), EakrStatus::Ok);
            assert_eq!(eakr_scenario_run(h, cstr("generate").as_ptr()), EakrStatus::Ok);
        }
        let g = file(h, "graph.json").unwrap();
        unsafe { eakr_scenario_free(h) };
        g
    };
    assert_eq!(run(3), run(3));
    assert_ne!(run(3), run(4));
}

#[test]
fn errors_map_to_status_codes() {
    let mut h = ptr::null_mut();
    let st = unsafe { eakr_scenario_from_json(cstr(r#"{"sed":1}"#).as_ptr(), &mut h) };
    assert_eq!(st, EakrStatus::Config);
    assert!(h.is_null());
    assert!(!last_error().is_empty());

    assert_eq!(unsafe { eakr_scenario_from_json(ptr::null(), &mut h) }, EakrStatus::NullArgument);
    let bad = [0xffu8, 0];
    assert_eq!(
        unsafe { eakr_scenario_from_json(bad.as_ptr() as *const c_char, &mut h) },
        EakrStatus::InvalidUtf8
    );

    let h = open(LINE);
    assert_eq!(unsafe { eakr_scenario_run(h, cstr("fly").as_ptr()) }, EakrStatus::UnknownCommand);
    assert_eq!(file(h, "eak.json"), Err(EakrStatus::NotRun));
    unsafe { eakr_scenario_free(h) };

    let isolated = r#"{"topology":{"source":"explicit",
        "nodes":[{"id":0,"tier":"sink","x":0,"y":0},{"id":1,"tier":"L","x":1,"y":0},{"id":2,"tier":"L","x":2,"y":0}],
        "links":[{"a":0,"b":1,"k":3,"f":0.5}]},"routes":{"destinations":[2]}}"#;
    let h = open(isolated);
    assert_eq!(unsafe { eakr_scenario_run(h, cstr("routes").as_ptr()) }, EakrStatus::Unreachable);
    unsafe { eakr_scenario_free(h) };

    assert_eq!(
        unsafe { eakr_scenario_run(ptr::null_mut(), cstr("all").as_ptr()) },
        EakrStatus::NullArgument
    );
    // Successful calls clear the previous message.
    let h = open(LINE);
    assert!(eakr_last_error().is_null());
    unsafe {
        eakr_scenario_free(h);
        eakr_scenario_free(ptr::null_mut());
        eakr_string_free(ptr::null_mut());
    }
}

#[test]
fn write_to_directory() {
    let dir = std::env::temp_dir().join(format!("eakroute-ffi-{}", std::process::id()));
    let h = open(LINE);
    unsafe {
        assert_eq!(eakr_scenario_write(h, cstr(dir.to_str().unwrap()).as_ptr()), EakrStatus::NotRun);
        assert_eq!(eakr_scenario_run(h, cstr("eka").as_ptr()), EakrStatus::Ok);
        assert_eq!(eakr_scenario_write(h, cstr(dir.to_str().unwrap()).as_ptr()), EakrStatus::Ok);
    }
    assert_eq!(std::fs::read_to_string(dir.join("eak.json")).unwrap(), file(h, "eak.json").unwrap());
    unsafe { eakr_scenario_free(h) };
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(eakr_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_api_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/eakroute.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in [
        "eakr_scenario_from_json",
        "eakr_scenario_run",
        "eakr_scenario_file",
        "eakr_scenario_free",
        "eakr_string_free",
        "eakr_last_error",
        "EAKR_STATUS_UNREACHABLE = 4",
        "typedef struct EakrScenario EakrScenario",
    ] {
        assert!(text.contains(sym), "missing {sym}");
    }
    // Syntax check with the system C compiler when there is one.
    let Ok(o) = Command::new("cc")
        .args(["-fsyntax-only", "-std=c99", "-x", "c"])
        .arg(&header)
        .output()
    else {
        return;
    };
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}
