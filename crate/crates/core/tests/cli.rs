use std::path::Path;
use std::process::{Command, Output};

fn rmix(args: &[&str], out_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rmix"));
    cmd.args(args).env_remove("RMIX_OUT_DIR");
    if let Some(d) = out_dir {
        cmd.env("RMIX_OUT_DIR", d);
    }
    cmd.output().expect("binary runs")
}

fn stdout_json(o: &Output) -> serde_json::Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

const TWO_PACKETS: &str = r#"{"model":"numeric"}
{"step":0,"arrivals":[{"id":0,"w":1.0,"d":1},{"id":1,"w":2.0,"d":2}]}
"#;

#[test]
fn certify_random_passes() {
    let o = rmix(&["certify", "--random", "300", "--seed", "4"], None);
    let v = stdout_json(&o);
    assert_eq!(v["failures"], 0);
    assert_eq!(v["passed"], true);
}

#[test]
fn certify_tightness_reports_rows() {
    let o = rmix(&["certify", "--tightness", "100"], None);
    let v = stdout_json(&o);
    let min = v[0]["min_ratio"].as_f64().unwrap();
    let bound = 1.0 - (-1.0f64).exp();
    assert!(min >= bound - 1e-9 && min <= bound * 1.02);
}

#[test]
fn simulate_empty_trace_has_unit_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("empty.jsonl");
    std::fs::write(&trace, "{\"model\":\"numeric\"}\n").unwrap();
    let o = rmix(
        &[
            "simulate",
            "--trace",
            trace.to_str().unwrap(),
            "--trials",
            "5",
        ],
        None,
    );
    let v = stdout_json(&o);
    assert_eq!(v["mean_ratio"], 1.0);
}

#[test]
fn opt_on_two_packets() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("two.jsonl");
    std::fs::write(&trace, TWO_PACKETS).unwrap();
    let o = rmix(&["opt", "--trace", trace.to_str().unwrap()], None);
    let v = stdout_json(&o);
    assert_eq!(v["value"], 3.0);
    assert_eq!(v["assignments"].as_array().unwrap().len(), 2);
}

#[test]
fn malformed_trace_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("bad.jsonl");
    std::fs::write(
        &trace,
        "{\"model\":\"numeric\"}\n{\"step\":0,\"arrivals\":[]}\n{\"step\":1,\"arrivals\":[{\"id\":0,\"w\":-1,\"d\":3}]}\n",
    )
    .unwrap();
    let o = rmix(&["opt", "--trace", trace.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn out_dir_env_and_byte_identical_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let gen = [
        "gen",
        "--steps",
        "40",
        "--arrival-rate",
        "1.5",
        "--seed",
        "11",
    ];
    assert!(rmix(&gen, Some(&a)).status.success());
    assert!(rmix(&gen, Some(&b)).status.success());
    let ta = std::fs::read(a.join("gen.jsonl")).unwrap();
    assert_eq!(ta, std::fs::read(b.join("gen.jsonl")).unwrap());

    let trace = a.join("gen.jsonl");
    let sim = [
        "simulate",
        "--trace",
        trace.to_str().unwrap(),
        "--trials",
        "50",
        "--seed",
        "3",
    ];
    assert!(rmix(&sim, Some(&a)).status.success());
    let mut serial = sim.to_vec();
    serial.push("--serial");
    assert!(rmix(&serial, Some(&b)).status.success());
    assert_eq!(
        std::fs::read(a.join("simulate.json")).unwrap(),
        std::fs::read(b.join("simulate.json")).unwrap()
    );
}

#[test]
fn adaptive_min_ratio_passes() {
    let o = rmix(
        &[
            "adaptive",
            "--steps",
            "60",
            "--arrival-rate",
            "2",
            "--seed",
            "8",
            "--dual-buffer",
            "--out",
            "csv",
        ],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("step,e_rmix,e_adv,ratio,case_taken,cumulative_ratio"));
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"steps": 5, "arrival_rate": 0, "seed": 1}"#).unwrap();
    let o = rmix(&["gen", "--config", cfg.to_str().unwrap()], None);
    assert!(o.status.success());
    let lines = String::from_utf8(o.stdout).unwrap();
    assert_eq!(lines.lines().count(), 6);
}

#[test]
fn bad_flags_exit_nonzero() {
    assert_eq!(rmix(&["certify"], None).status.code(), Some(2));
    assert_eq!(
        rmix(&["simulate", "--trace", "/nonexistent"], None)
            .status
            .code(),
        Some(2)
    );
    assert!(!rmix(&["gen", "--weight-dist", "cauchy:1"], None)
        .status
        .success());
}
