use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shrinkerlab"))
        .args(args)
        .output()
        .expect("spawn shrinkerlab")
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_sphere(path: &Path, nodes: usize) {
    let c = shrinkerlab::reference::sphere(2, 1.0, nodes).unwrap();
    shrinkerlab::io::write_curve(path, &c).unwrap();
}

#[test]
fn usage_errors() {
    assert_eq!(code(&["frobnicate"]), 64);
    assert_eq!(code(&[]), 64);
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["shoot", "--n", "two"]), 65);
    assert_eq!(code(&["shoot", "--n", "1", "--r0", "1"]), 65);
    assert_eq!(code(&["shoot", "--n", "2", "--scan", "1:2"]), 65);
    assert_eq!(code(&["find-torus", "--n", "2", "--nodes", "8", "--out", "/tmp/never.json"]), 65);
}

#[test]
fn malformed_curve_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"n\": 2, \"closed\": true, \"nodes\": [[0, 1]").unwrap();
    let out = dir.path().join("run");
    assert_eq!(code(&["evolve", "--curve", s(&bad), "--out", s(&out)]), 65);
    assert_eq!(code(&["entropy", "--curve", s(&bad)]), 65);
    let missing = dir.path().join("missing.json");
    assert_eq!(code(&["entropy", "--curve", s(&missing)]), 65);
    assert!(!out.exists());
}

#[test]
fn shoot_scan_finds_bracket() {
    let out = run(&["--json-summary", "shoot", "--n", "2", "--scan", "0.1:1.4:0.05"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["command"], "shoot");
    assert!(v["bracket"].is_array());
}

#[test]
fn sphere_evolve_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let curve = dir.path().join("sphere.json");
    write_sphere(&curve, 64);
    let run_dir = dir.path().join("run");
    assert_eq!(code(&["--quiet", "evolve", "--curve", s(&curve), "--out", s(&run_dir)]), 0);
    for f in ["run.json", "series.csv", "events.json", "singularity.json", "snap_00000.json"] {
        assert!(run_dir.join(f).is_file(), "{f}");
    }
    let rec: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("singularity.json")).unwrap()).unwrap();
    let t = rec["t_sing"].as_f64().unwrap();
    assert!((t - 0.25).abs() < 1e-3 * 0.25, "{t}");
    assert_eq!(rec["shape"], "point");
    assert!(fs::read_to_string(run_dir.join("series.csv")).unwrap().starts_with("# shrinkerlab series v1\n"));

    assert_eq!(code(&["--quiet", "report", "--run", s(&run_dir), "--svg"]), 0);
    assert!(fs::read_to_string(run_dir.join("profiles.svg")).unwrap().starts_with("<svg"));
    assert!(run_dir.join("curvature.svg").is_file());

    let short = dir.path().join("short");
    assert_eq!(code(&["--quiet", "evolve", "--curve", s(&curve), "--out", s(&short), "--max-steps", "5"]), 2);
    assert!(short.join("run.json").is_file());
    assert_eq!(code(&["evolve", "--curve", s(&curve), "--out", s(&short), "--t-end", "-1"]), 65);
}

#[test]
fn entropy_command_appends_csv_rows() {
    let dir = tempfile::tempdir().unwrap();
    let curve = dir.path().join("sphere.json");
    let c = shrinkerlab::reference::sphere(2, 2.0, 512).unwrap();
    shrinkerlab::io::write_curve(&curve, &c).unwrap();
    let csv = dir.path().join("table.csv");
    let report = dir.path().join("report.json");
    for _ in 0..2 {
        assert_eq!(
            code(&["--quiet", "entropy", "--curve", s(&curve), "--csv", s(&csv), "--out", s(&report)]),
            0
        );
    }
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "n,L_n,A,F01,entropy_sup,bound_dn");
    assert_eq!(lines.len(), 3);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert!((v["f01"].as_f64().unwrap() - 4.0 / 1f64.exp()).abs() < 1e-4);
}

#[test]
fn outputs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let t = d.join("torus.json");
        assert_eq!(code(&["--quiet", "find-torus", "--n", "2", "--nodes", "128", "--out", s(&t)]), 0);
        let r = d.join("run");
        assert_eq!(
            code(&["--quiet", "evolve", "--curve", s(&t), "--t0", "-1", "--t-end", "-0.9", "--snapshot-times", "-0.95,-0.92", "--out", s(&r)]),
            0
        );
    }
    for f in ["torus.json", "torus.shooter.json", "run/run.json", "run/series.csv", "run/events.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn small_family_construct_resume_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let fam = dir.path().join("fam");
    let args = ["--quiet", "construct", "--n", "2", "--i", "8,16", "--nodes", "96", "--no-entropy", "--out", s(&fam)];
    assert_eq!(code(&args), 0);
    for f in ["torus.json", "family_report.json", "cauchy.csv", "blowdown.csv", "i_008/run.json", "i_016/member.json"] {
        assert!(fam.join(f).is_file(), "{f}");
    }
    let first = fs::read(fam.join("family_report.json")).unwrap();
    let mut resumed = args.to_vec();
    resumed.push("--resume");
    assert_eq!(code(&resumed), 0);
    let report: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 2);
    assert_eq!(code(&["--quiet", "report", "--family", s(&fam), "--svg"]), 0);
    for f in ["profiles.svg", "rescaled.svg", "type_one.svg"] {
        assert!(fam.join(f).is_file(), "{f}");
    }
    assert_eq!(code(&["construct", "--i", "16,8", "--out", s(&fam)]), 65);
}
