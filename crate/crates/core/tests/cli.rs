use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

use umbra::bodies::{
    BallParams, BodySpec, CantorParams, EllipsoidParams, Family, KiselmanParams, SuperellipsoidParams,
};

fn umbra(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_umbra")).args(args).output().unwrap()
}

fn write_spec(dir: &TempDir, name: &str, family: Family) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, BodySpec::new(family).to_json()).unwrap();
    path
}

fn ball(dir: &TempDir, name: &str, center: [f64; 3], radius: f64) -> PathBuf {
    write_spec(dir, name, Family::TranslatedBall(BallParams { center: center.to_vec(), radius }))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn shadow_writes_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(&dir, "e.json", Family::Ellipsoid(EllipsoidParams { semiaxes: vec![1.0, 2.0, 1.5] }));
    let out = umbra(&["shadow", s(&spec), "--u", "0.3", "0.2", "1.0"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "y1,gamma,residual");
    assert_eq!(lines.count(), 64);
}

#[test]
fn shadow_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ball(&dir, "b.json", [0.0; 3], 1.0);
    assert_eq!(umbra(&["shadow", s(&spec), "--u", "0", "0", "0"]).status.code(), Some(1));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"family\": ").unwrap();
    assert_eq!(umbra(&["shadow", s(&bad), "--u", "0", "0", "1"]).status.code(), Some(1));
    let unknown = dir.path().join("unknown.json");
    std::fs::write(&unknown, "{\"family\": \"torus\", \"params\": {}}").unwrap();
    assert_eq!(umbra(&["shadow", s(&unknown), "--u", "0", "0", "1"]).status.code(), Some(1));
}

#[test]
fn kiselman_shadow_round_trips_through_diagnose() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(&dir, "k.json", Family::Kiselman(KiselmanParams { q: 3, strip_half_width: 0.5 }));
    let csv = dir.path().join("k.csv");
    let out = umbra(&[
        "shadow",
        s(&spec),
        "--u",
        "0",
        "1",
        "0",
        "--dyadic",
        "4",
        "12",
        "--at",
        "0",
        "0",
        "0",
        "--out",
        s(&csv),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = umbra(&["diagnose", s(&csv), "--mode", "holder"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let fit = json(&out);
    assert!((fit["alpha_hat"].as_f64().unwrap() - 2.0 / 3.0).abs() < 0.05, "{fit}");
    assert!(fit["C_hat"].as_f64().unwrap() > 0.0);
}

#[test]
fn project_traces_coaxial_balls() {
    let dir = tempfile::tempdir().unwrap();
    let omega = ball(&dir, "o.json", [0.0, 0.0, 3.0], 1.0);
    let lambda = ball(&dir, "l.json", [0.0; 3], 1.0);
    let csv = dir.path().join("trace.csv");
    let out = umbra(&["project", s(&omega), s(&lambda), "--step", "0.01", "--out", s(&csv)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(csv.with_extension("json")).unwrap()).unwrap();
    assert_eq!(meta["closed"], serde_json::Value::Bool(true), "{meta}");
    let rows = std::fs::read_to_string(&csv).unwrap().lines().count() - 1;
    assert!(rows > 100);

    let out = umbra(&["diagnose", s(&csv), "--mode", "boxdim", "--scales", "0.02", "0.04", "0.08", "0.16", "0.32"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!((json(&out)["d_hat"].as_f64().unwrap() - 1.0).abs() < 0.15);
    // A trace is not a graph over the chart: holder mode refuses it.
    assert_eq!(umbra(&["diagnose", s(&csv), "--mode", "holder"]).status.code(), Some(1));
}

#[test]
fn project_reports_overlap_and_rank_drop() {
    let dir = tempfile::tempdir().unwrap();
    let o = write_spec(&dir, "o.json", Family::CantorContact(CantorParams { eps: 1e-3, depth: 3 }));
    let l = write_spec(&dir, "l.json", Family::CantorContact(CantorParams { eps: 0.0, depth: 3 }));
    let csv = dir.path().join("t.csv");
    assert_eq!(umbra(&["project", s(&o), s(&l), "--out", s(&csv)]).status.code(), Some(3));

    let o = write_spec(
        &dir,
        "se.json",
        Family::Superellipsoid(SuperellipsoidParams { semiaxes: vec![1.0; 3], exponents: vec![2, 4, 2] }),
    );
    let l = ball(&dir, "b.json", [0.0, -3.0, 1.0], 1.0);
    assert_eq!(umbra(&["project", s(&o), s(&l), "--out", s(&csv)]).status.code(), Some(4));
}

#[test]
fn diagnose_rejects_empty_and_foreign_csv() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(umbra(&["diagnose", s(&empty), "--mode", "holder"]).status.code(), Some(1));
    let foreign = dir.path().join("foreign.csv");
    std::fs::write(&foreign, "a,b\n1,2\n").unwrap();
    assert_eq!(umbra(&["diagnose", s(&foreign), "--mode", "boxdim"]).status.code(), Some(1));
    let missing = dir.path().join("missing.csv");
    assert_eq!(umbra(&["diagnose", s(&missing), "--mode", "holder"]).status.code(), Some(1));
}

#[test]
fn diagnose_cusp_needs_constants() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(&dir, "e.json", Family::Ellipsoid(EllipsoidParams { semiaxes: vec![1.0, 1.5, 2.0] }));
    let csv = dir.path().join("e.csv");
    let out = umbra(&["shadow", s(&spec), "--u", "0", "0.4", "1", "--grid", "400", "--out", s(&csv)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(umbra(&["diagnose", s(&csv), "--mode", "cusp"]).status.code(), Some(1));
    let out = umbra(&["diagnose", s(&csv), "--mode", "boxdim"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let d = json(&out)["d_hat"].as_f64().unwrap();
    assert!((0.0..=2.0).contains(&d));
}

#[test]
fn counterexample_reports() {
    let out = umbra(&["counterexample", "kiselman", "--q", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert!((v["holder_fit"]["alpha_hat"].as_f64().unwrap() - 0.4).abs() < 0.05, "{v}");
    assert!(v["identity_max_error"].as_f64().unwrap() < 1e-12);

    let out = umbra(&["counterexample", "cantor", "--depth", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["contact_count"], 4);
    assert_eq!(v["disjoint"], false);

    let out = umbra(&["counterexample", "cone", "--samples", "2000"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(json(&out)["frames_witnessed"].as_u64().unwrap() > 0);

    assert_eq!(umbra(&["counterexample", "kiselman", "--q", "4"]).status.code(), Some(1));
}
