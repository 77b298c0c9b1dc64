use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn eakroute(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eakroute"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("cfg.json");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn eka_on_line_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("line.json");
    let o = eakroute(&["eka", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let eak = read_json(&dir.path().join("eak.json"));
    let nodes = eak["nodes"].as_array().unwrap();
    let value = |id: u64| nodes.iter().find(|n| n["node"] == id).unwrap()["eak"].as_f64().unwrap();
    assert!((value(1) - 20.0).abs() < 1e-9);
    assert!((value(2) - 36.0).abs() < 1e-9);
}

#[test]
fn mc_row_for_three_forwarders() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"topology":{"source":"fixture","name":"line"},"mc":{"ns":[3],"fs":[0.5],"trials":20000}}"#,
    );
    let o = eakroute(&["mc", "--config", cfg.to_str().unwrap(), "--format", "csv"], dir.path());
    assert!(o.status.success());
    let stdout = String::from_utf8(o.stdout).unwrap();
    let row = stdout.lines().find(|l| l.starts_with("broadcast_group_key,3,0.5,")).unwrap();
    assert_eq!(row.split(',').nth(3), Some("1.142857"));
    assert!(dir.path().join("mc.json").exists());
}

#[test]
fn generate_twice_gives_identical_manifests() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert!(eakroute(&["generate", "--seed", "5"], d.path()).status.success());
    }
    // The resolved config echoes the output directory, so compare the rest.
    let strip = |d: &Path| {
        let mut m = read_json(&d.join("manifest.json"));
        m["files"].as_object_mut().unwrap().remove("resolved_config.json");
        m
    };
    assert_eq!(strip(a.path()), strip(b.path()));
    assert_eq!(
        std::fs::read(a.path().join("graph.json")).unwrap(),
        std::fs::read(b.path().join("graph.json")).unwrap()
    );
}

#[test]
fn resolved_config_reruns_to_identical_outputs() {
    let first = tempfile::tempdir().unwrap();
    let cfg = configs().join("diamond.json");
    assert!(
        eakroute(&["all", "--config", cfg.to_str().unwrap(), "--trials", "5000"], first.path())
            .status
            .success()
    );
    let second = tempfile::tempdir().unwrap();
    let resolved = first.path().join("resolved_config.json");
    assert!(eakroute(&["all", "--config", resolved.to_str().unwrap()], second.path())
        .status
        .success());
    for f in [
        "graph.json",
        "eak.json",
        "routes.json",
        "mc.csv",
        "transcripts.json",
        "adversary.json",
        "metrics.csv",
    ] {
        assert_eq!(
            std::fs::read(first.path().join(f)).unwrap(),
            std::fs::read(second.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

fn error_of(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).unwrap_or_else(|_| panic!("stderr is not JSON: {}", String::from_utf8_lossy(&o.stderr)))
}

#[test]
fn distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    let bad = write_config(dir.path(), r#"{"sed": 1}"#);
    let o = eakroute(&["eka", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_of(&o)["error"], "config");

    let isolated = write_config(
        dir.path(),
        r#"{"topology":{"source":"explicit",
            "nodes":[{"id":0,"tier":"sink","x":0,"y":0},{"id":1,"tier":"L","x":1,"y":0},{"id":2,"tier":"L","x":2,"y":0}],
            "links":[{"a":0,"b":1,"k":3,"f":0.5}]}}"#,
    );
    let o = eakroute(&["routes", "--config", isolated.to_str().unwrap(), "--dest", "2"], dir.path());
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(error_of(&o)["error"], "unreachable");

    let line = configs().join("line.json");
    let o = eakroute(&["routes", "--config", line.to_str().unwrap(), "--dest", "9"], dir.path());
    assert_eq!(o.status.code(), Some(3));

    let o = eakroute(&["eka", "--bogus"], dir.path());
    assert_eq!(o.status.code(), Some(2));

    let fixture = write_config(dir.path(), r#"{"topology":{"source":"fixture","name":"pentagon"}}"#);
    let o = eakroute(&["generate", "--config", fixture.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn routes_for_one_destination() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("binary_tree.json");
    let o = eakroute(&["routes", "--config", cfg.to_str().unwrap(), "--dest", "6"], dir.path());
    assert!(o.status.success());
    let routes = read_json(&dir.path().join("routes.json"));
    let r = &routes["routes"][0];
    assert_eq!(r["destination"], 6);
    let path = r["route_set"]["chosen"].as_array().unwrap();
    assert_eq!(path.first().unwrap(), 0);
    assert_eq!(path.last().unwrap(), 6);
    assert!(r["trace"]["query"].as_array().unwrap().len() <= 6);
}

#[test]
fn shipped_configs_parse() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let p = entry.unwrap().path();
        let text = std::fs::read_to_string(&p).unwrap();
        eakroute::config::ScenarioConfig::from_json(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}
