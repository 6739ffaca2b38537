use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hoist(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hoist"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn scenarios() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

/// A copy of a shipped scenario cut to `duration` seconds.
fn short(name: &str, duration: f64, dir: &Path) -> PathBuf {
    let text = std::fs::read_to_string(scenarios().join(name)).unwrap();
    let text: String = text
        .lines()
        .map(|l| {
            if l.starts_with("duration") {
                format!("duration = {duration}")
            } else {
                l.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn run_writes_logs_and_plots() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = short("fig8_3uav_triangle.toml", 1.0, tmp.path());
    let out = tmp.path().join("out");
    let o = hoist(&[
        "run",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "42",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "ticks.jsonl",
        "ticks.csv",
        "summary.json",
        "timing.json",
        "position_error.png",
        "attitude_error.png",
        "clearance.png",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let s = summary(&out);
    assert_eq!(s["seed"], 42);
    assert_eq!(s["mode"], "qp_cascade");
    let png = std::fs::read(out.join("clearance.png")).unwrap();
    assert_eq!(&png[..4], b"\x89PNG");
}

#[test]
fn mode_override_and_matrix_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let a = short("hover_3uav.toml", 0.3, tmp.path());
    let b = short("fig8_3uav_point_mass.toml", 0.3, tmp.path());
    let out = tmp.path().join("out");
    let o = hoist(&[
        "run",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "--mode",
        "qp",
        "--out",
        out.to_str().unwrap(),
        "--no-plots",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["hover_3uav", "fig8_3uav_point_mass"] {
        assert_eq!(summary(&out.join(name))["mode"], "qp_cascade");
        assert!(!out.join(name).join("clearance.png").exists());
    }
}

#[test]
fn aborted_run_fails_but_keeps_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = short("fig8_2uav_rod.toml", 1.0, tmp.path());
    let out = tmp.path().join("out");
    let o = hoist(&[
        "run",
        scenario.to_str().unwrap(),
        "--mode",
        "baseline",
        "--out",
        out.to_str().unwrap(),
        "--no-plots",
    ]);
    assert!(!o.status.success());
    assert!(!summary(&out)["aborted"].is_null());
}

#[test]
fn compare_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = short("fig8_3uav_point_mass.toml", 0.5, tmp.path());
    let out = tmp.path().join("out");
    let o = hoist(&[
        "compare",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("compare.json")).unwrap()).unwrap();
    assert_eq!(report["baseline"]["mode"], "baseline");
    assert_eq!(report["qp_cascade"]["mode"], "qp_cascade");
    assert!(report["qp_cascade"]["first_contact"].is_null());
    assert!(out.join("min_distance.png").is_file());
    assert!(out.join("baseline").join("ticks.jsonl").is_file());
}

#[test]
fn bench_qp_round_trips_generated_fixtures() {
    let tmp = tempfile::tempdir().unwrap();
    let fixtures = tmp.path().join("qp.json");
    let json = tmp.path().join("bench.json");
    assert!(hoist(&[
        "bench-qp",
        fixtures.to_str().unwrap(),
        "--generate",
        "5",
        "--seed",
        "3"
    ])
    .status
    .success());
    let o = hoist(&[
        "bench-qp",
        fixtures.to_str().unwrap(),
        "--repeat",
        "3",
        "--json",
        json.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r["status"] == "Solved"));
}

#[test]
fn shipped_fixtures_solve() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/qp_random.json");
    let o = hoist(&["bench-qp", path.to_str().unwrap(), "--repeat", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(
        !stdout.contains("MaxIter") && !stdout.contains("Infeasible"),
        "{stdout}"
    );
}

#[test]
fn invalid_scenario_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "version = 1\nname = \"x\"\nduration = -1.0\n").unwrap();
    let o = hoist(&[
        "run",
        bad.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("invalid scenario"));
}
