//! End-to-end checks of the command-line interface: golden outputs on the
//! bundled scenarios, byte stability, exit codes, and the reduce round
//! trip.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_dcgrid")
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str]) -> Run {
    let out = Command::new(bin()).args(args).output().expect("binary must launch");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).expect("stdout must be UTF-8"),
        stderr: String::from_utf8(out.stderr).expect("stderr must be UTF-8"),
    }
}

fn json(text: &str) -> Value {
    serde_json::from_str(text).expect("output must be valid JSON")
}

#[test]
fn stability_golden_on_the_triangle() {
    let path = scenario("three_node_triangle.json");
    let r = run(&["stability", "--in", path.to_str().unwrap()]);
    assert_eq!(r.code, 0, "stderr: {}", r.stderr);
    let v = json(&r.stdout);
    assert_eq!(v["network"]["n"], 3);
    assert_eq!(v["network"]["connected"], true);
    assert_eq!(v["network"]["shunt_present"], true);
    let coop = &v["cooperative"];
    assert_eq!(coop["verdict"], "Semistable");
    assert_eq!(coop["zero_eigenvalue_count"], 1);
    assert_eq!(coop["zero_semisimple"], true);
    assert!(coop["max_nonzero_real_part"].as_f64().unwrap() < -45.0);
    assert_eq!(coop["condition_1"]["outcome"], "fails");
    assert!(coop["condition_1"]["reason"]
        .as_str()
        .unwrap()
        .contains("does not exist"));
    assert_eq!(coop["condition_2"]["outcome"], "holds");
    assert_eq!(coop["condition_2"]["theta_kind"], "infinite");
    let nu = coop["condition_2"]["nu"].as_f64().unwrap();
    assert!(nu > 0.02 && nu < 0.03, "nu = {nu}");
    let rc1 = coop["steady_state"]["rc1"].as_f64().unwrap();
    assert!((rc1 - 0.485529136010).abs() < 1e-9);
    assert_eq!(coop["corollaries"]["p1"]["status"], "Pass");
    assert_eq!(coop["corollaries"]["p4"]["status"], "NotApplicable");
    assert_eq!(v["warnings"].as_array().unwrap().len(), 0);
}

#[test]
fn reports_are_byte_stable() {
    let path = scenario("three_node_triangle.json");
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("a.json");
    let out2 = dir.path().join("b.json");
    for (out, _) in [(&out1, 0), (&out2, 1)] {
        let r = run(&["stability", "--in", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(r.code, 0, "stderr: {}", r.stderr);
    }
    let a = std::fs::read(&out1).unwrap();
    let b = std::fs::read(&out2).unwrap();
    assert_eq!(a, b, "two runs must serialize identically");
}

#[test]
fn simulate_summary_trajectory_and_method_override() {
    let path = scenario("three_node_triangle.json");
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("traj.csv");
    let r = run(&[
        "simulate",
        "--in",
        path.to_str().unwrap(),
        "--csv",
        csv_path.to_str().unwrap(),
    ]);
    assert_eq!(r.code, 0, "stderr: {}", r.stderr);
    let v = json(&r.stdout);
    assert_eq!(v["method"], "exact");
    assert_eq!(v["samples"], 2001);
    let im = v["terminal"]["im"].as_array().unwrap();
    for x in im {
        assert!((x.as_f64().unwrap() - 14.565874080295).abs() < 1e-6);
    }
    assert!(v["conservation"]["normalized"].as_f64().unwrap() <= 1e-9);
    assert!(v["prediction_gap"]["max_current_error"].as_f64().unwrap() < 1e-6);

    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2002);
    assert_eq!(
        lines[0],
        "t,Im_1,Im_2,Im_3,Ud_1,Ud_2,Ud_3,U_1,U_2,U_3,I_1,I_2,I_3,ratio_1,ratio_2,ratio_3"
    );
    assert!(lines[1].starts_with("0.00000000e0,"));

    // the integrator override must agree with the exact run
    let r2 = run(&["simulate", "--in", path.to_str().unwrap(), "--method", "rk4"]);
    assert_eq!(r2.code, 0, "stderr: {}", r2.stderr);
    let v2 = json(&r2.stdout);
    assert!(v2["method"].as_str().unwrap().starts_with("rk4"));
    let im2 = v2["terminal"]["im"].as_array().unwrap();
    for (a, b) in im.iter().zip(im2) {
        assert!((a.as_f64().unwrap() - b.as_f64().unwrap()).abs() < 1e-5);
    }
}

#[test]
fn reduce_output_feeds_back_as_a_scenario() {
    let path = scenario("star_reduction.json");
    let r = run(&["reduce", "--in", path.to_str().unwrap()]);
    assert_eq!(r.code, 0, "stderr: {}", r.stderr);
    let reduced = json(&r.stdout);
    assert_eq!(reduced["n"], 3);
    assert_eq!(reduced["node_ids"].as_array().unwrap().len(), 3);
    let inj = reduced["equivalent_injection"].as_array().unwrap();
    assert_eq!(inj.len(), 3);
    // load draws 3 A split across line conductances 1 : 2 : 2.5 over 6.5
    assert!((inj[0].as_f64().unwrap() - 3.0 / 6.5).abs() < 1e-12);

    // splice the reduce output into a copy of the scenario
    let original: Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let mut round = original.clone();
    round["network"] = serde_json::json!({ "reduced": reduced });
    let dir = tempfile::tempdir().unwrap();
    let round_path = dir.path().join("round.json");
    std::fs::write(&round_path, serde_json::to_string_pretty(&round).unwrap()).unwrap();

    let direct = run(&["stability", "--in", path.to_str().unwrap()]);
    let via_reduced = run(&["stability", "--in", round_path.to_str().unwrap()]);
    assert_eq!(direct.code, 0, "stderr: {}", direct.stderr);
    assert_eq!(via_reduced.code, 0, "stderr: {}", via_reduced.stderr);
    let mut a = json(&direct.stdout);
    let mut b = json(&via_reduced.stdout);
    // everything but the input hash must agree exactly
    a.as_object_mut().unwrap().remove("input_sha256");
    b.as_object_mut().unwrap().remove("input_sha256");
    assert_eq!(a, b);
}

#[test]
fn disconnected_networks_warn_but_classify() {
    let path = scenario("two_triangle_disconnected.json");
    let r = run(&["stability", "--in", path.to_str().unwrap()]);
    assert_eq!(r.code, 0, "stderr: {}", r.stderr);
    let v = json(&r.stdout);
    assert_eq!(v["network"]["connected"], false);
    assert_eq!(v["cooperative"]["verdict"], "Semistable");
    assert_eq!(v["cooperative"]["zero_eigenvalue_count"], 2);
    assert_eq!(v["cooperative"]["zero_semisimple"], true);
    let warnings = v["warnings"].as_array().unwrap();
    assert!(!warnings.is_empty());
    assert!(warnings[0].as_str().unwrap().contains("disconnected"));
}

#[test]
fn sweep_finds_the_destabilizing_gain() {
    let path = scenario("alpha_destab_sweep.json");
    let r = run(&["sweep", "--in", path.to_str().unwrap(), "--param", "alpha", "--values=0,0.5"]);
    assert_eq!(r.code, 0, "stderr: {}", r.stderr);
    let lines: Vec<&str> = r.stdout.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "param,value,verdict,zero_eigenvalue_count,max_nonzero_real_part,rc1,error");
    let row0: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(row0[2], "Semistable");
    assert!(row0[4].parse::<f64>().unwrap() < 0.0);
    let row1: Vec<&str> = lines[2].split(',').collect();
    assert_eq!(row1[2], "NotSemistable");
    assert!(row1[4].parse::<f64>().unwrap() > 0.0, "gain must push an eigenvalue across");
    assert!(row1[6].is_empty());

    // a value violating validation lands in the error column, exit stays 0
    let r2 = run(&["sweep", "--in", path.to_str().unwrap(), "--param", "beta", "--values=-5"]);
    assert_eq!(r2.code, 0);
    let lines2: Vec<&str> = r2.stdout.lines().collect();
    assert!(lines2[1].contains("integral gain"));

    // unknown parameter is a usage error
    let r3 = run(&["sweep", "--in", path.to_str().unwrap(), "--param", "gamma", "--values=1"]);
    assert_eq!(r3.code, 2);
    assert!(r3.stderr.contains("unknown sweep parameter"));
}

#[test]
fn exit_codes_separate_input_from_numeric_failures() {
    // missing file
    let r = run(&["stability", "--in", "/nonexistent/file.json"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("cannot read"));

    // malformed JSON
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, b"{ not json").unwrap();
    let r = run(&["stability", "--in", bad.to_str().unwrap()]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("scenario JSON"));

    // structurally invalid scenario
    let invalid = dir.path().join("invalid.json");
    std::fs::write(&invalid, br#"{"network": {"reduced": {"y": [[1.0, 0.5], [0.4, 1.0]]}}}"#)
        .unwrap();
    let r = run(&["stability", "--in", invalid.to_str().unwrap()]);
    assert_eq!(r.code, 2);

    // unstable long run crosses the norm ceiling: numeric failure
    let path = scenario("alpha_destab_sweep.json");
    let r = run(&["simulate", "--in", path.to_str().unwrap()]);
    assert_eq!(r.code, 3, "stderr: {}", r.stderr);
    assert!(r.stderr.contains("exceeds"));
}

#[test]
fn analysis_checks_subset_is_respected() {
    let dir = tempfile::tempdir().unwrap();
    let base = std::fs::read_to_string(scenario("three_node_triangle.json")).unwrap();
    let mut v: Value = serde_json::from_str(&base).unwrap();
    v["analysis"] = serde_json::json!({"checks": ["spectral"]});
    let path = dir.path().join("spectral_only.json");
    std::fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    let r = run(&["stability", "--in", path.to_str().unwrap()]);
    assert_eq!(r.code, 0, "stderr: {}", r.stderr);
    let out = json(&r.stdout);
    assert_eq!(out["cooperative"]["verdict"], "Semistable");
    assert!(out["cooperative"]["condition_1"].is_null());
    assert!(out["cooperative"]["condition_2"].is_null());
    assert!(out["cooperative"]["corollaries"].is_null());
}
