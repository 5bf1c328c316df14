//! End-to-end tests of the `rescert` binary: exit codes, file formats,
//! determinism, and the extract/eval pipelines.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rescert(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rescert"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, content: &str) {
    fs::write(dir.join(name), content).unwrap();
}

const ESN_CONTRACTING: &str =
    r#"{"family":"esn","A":[[0.4]],"c":[[1.0]],"zeta":[0.0],"sigma":"tanh"}"#;
const ESN_EXPANDING: &str =
    r#"{"family":"esn","A":[[0.6]],"c":[[1.0]],"zeta":[0.0],"sigma":"tanh"}"#;
const MEMORYLESS_LINEAR: &str = r#"{"family":"linear","A":[[0.0]],"c":[[1.0]]}"#;
const NILPOTENT_POLY: &str = r#"{"family":"linear","A":[[0.0,1.0],[0.0,0.0]],"c":[[0.0],[1.0]],
"readout":{"kind":"polynomial","input_dim":2,"output_dim":1,
"terms":[{"coeff":[1.0],"exponents":[1,0]},{"coeff":[0.5],"exponents":[0,2]},{"coeff":[-0.25],"exponents":[1,2]}]}}"#;
const GEOMETRIC_HALF: &str = r#"{"kind":"geometric","lambda":0.5}"#;

#[test]
fn certify_writes_the_expected_certificate() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "esn.json", ESN_CONTRACTING);
    let out = rescert(
        dir.path(),
        &[
            "certify",
            "--system",
            "esn.json",
            "--weighting",
            GEOMETRIC_HALF,
            "--out",
            "cert.json",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("esn-product"));
    assert!(stdout.contains("certified"));

    let cert: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("cert.json")).unwrap()).unwrap();
    assert_eq!(cert["condition"], "esn-product");
    assert!((cert["lhs_value"].as_f64().unwrap() - 0.8).abs() < 1e-12);
    assert_eq!(cert["verdict"], "certified");
}

#[test]
fn require_certified_sets_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "esn.json", ESN_EXPANDING);
    let out = rescert(
        dir.path(),
        &[
            "certify",
            "--system",
            "esn.json",
            "--weighting",
            GEOMETRIC_HALF,
            "--require-certified",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("not-certified"));
}

#[test]
fn malformed_inputs_exit_one_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.json", r#"{"family":"linear","A":[[0.0]"#);
    let out = rescert(
        dir.path(),
        &["certify", "--system", "bad.json", "--weighting", GEOMETRIC_HALF],
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.json"), "diagnostic names the file: {err}");

    write(dir.path(), "alien.json", r#"{"family":"quantum","A":[[0.0]]}"#);
    let out = rescert(
        dir.path(),
        &["certify", "--system", "alien.json", "--weighting", GEOMETRIC_HALF],
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("linear"), "diagnostic lists families: {err}");
    assert!(err.contains("esn"), "diagnostic lists families: {err}");
}

#[test]
fn certificate_output_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "esn.json", ESN_CONTRACTING);
    for name in ["a.json", "b.json"] {
        let out = rescert(
            dir.path(),
            &[
                "certify",
                "--system",
                "esn.json",
                "--weighting",
                GEOMETRIC_HALF,
                "--out",
                name,
            ],
        );
        assert!(out.status.success());
    }
    let a = fs::read(dir.path().join("a.json")).unwrap();
    let b = fs::read(dir.path().join("b.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn memoryless_eval_echoes_the_input() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "linear.json", MEMORYLESS_LINEAR);
    write(dir.path(), "z.csv", "0.25\n-1.5\n3.0\n");
    let out = rescert(
        dir.path(),
        &[
            "eval",
            "--system",
            "linear.json",
            "--input",
            "z.csv",
            "--weighting",
            GEOMETRIC_HALF,
            "--mode",
            "picard",
            "--out",
            "states.csv",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("states.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,x1");
    assert_eq!(lines[1], "-2,0.25");
    assert_eq!(lines[2], "-1,-1.5");
    assert_eq!(lines[3], "0,3.0");
}

#[test]
fn volterra_pipeline_matches_direct_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "nil.json", NILPOTENT_POLY);
    write(dir.path(), "z.csv", "0.7\n-0.2\n0.4\n0.9\n-0.6\n");

    let out = rescert(
        dir.path(),
        &["volterra-extract", "--system", "nil.json", "--exact", "--out", "k.json"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = rescert(
        dir.path(),
        &["volterra-eval", "--kernels", "k.json", "--input", "z.csv", "--out", "series.csv"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = rescert(
        dir.path(),
        &[
            "eval",
            "--system",
            "nil.json",
            "--input",
            "z.csv",
            "--weighting",
            GEOMETRIC_HALF,
            "--mode",
            "forward",
            "--out",
            "states.csv",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // Compare series values against the filter outputs per time index.
    let series = fs::read_to_string(dir.path().join("series.csv")).unwrap();
    let states = fs::read_to_string(dir.path().join("states.csv")).unwrap();
    let series_rows: Vec<(i64, f64)> = series
        .lines()
        .skip(1)
        .map(|l| {
            let mut parts = l.split(',');
            let t = parts.next().unwrap().parse().unwrap();
            let y = parts.next().unwrap().parse().unwrap();
            (t, y)
        })
        .collect();
    let output_col = states.lines().next().unwrap().split(',').count() - 1;
    let filter_rows: std::collections::HashMap<i64, f64> = states
        .lines()
        .skip(1)
        .map(|l| {
            let parts: Vec<&str> = l.split(',').collect();
            (parts[0].parse().unwrap(), parts[output_col].parse().unwrap())
        })
        .collect();
    assert!(!series_rows.is_empty());
    for (t, y) in series_rows {
        let direct = filter_rows[&t];
        assert!(
            (y - direct).abs() <= 1e-10,
            "time {t}: series {y} vs filter {direct}"
        );
    }
}

#[test]
fn kernel_sets_round_trip_through_json() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "nil.json", NILPOTENT_POLY);
    let out = rescert(
        dir.path(),
        &["volterra-extract", "--system", "nil.json", "--exact", "--out", "k1.json"],
    );
    assert!(out.status.success());

    // Re-evaluating from the file must produce identical series values.
    write(dir.path(), "z.csv", "0.3\n0.1\n-0.8\n");
    for kernel_file in ["k1.json", "k1.json"] {
        let out = rescert(
            dir.path(),
            &["volterra-eval", "--kernels", kernel_file, "--input", "z.csv", "--out", "y.csv"],
        );
        assert!(out.status.success());
    }
    let first: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("k1.json")).unwrap()).unwrap();
    assert_eq!(first["J"], 3);
    assert_eq!(first["M_mem"], 1);
    assert!(first["g"]["1"].is_array());
}

#[test]
fn certificates_round_trip_through_json() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "esn.json", ESN_CONTRACTING);
    let out = rescert(
        dir.path(),
        &[
            "certify",
            "--system",
            "esn.json",
            "--weighting",
            r#"{"kind":"gaussian-exp"}"#,
            "--out",
            "cert.json",
        ],
    );
    assert!(out.status.success());
    // Gaussian weights have an infinite inverse decay ratio; the JSON
    // carries it as "inf" and must re-parse to the same value.
    let text = fs::read_to_string(dir.path().join("cert.json")).unwrap();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(value["lhs_value"], "inf");
    assert_eq!(value["verdict"], "not-certified");
    let reser = serde_json::to_string_pretty(&value).unwrap();
    let reparsed: serde_json::Value = serde_json::from_str(&reser).unwrap();
    assert_eq!(value, reparsed);
}

#[test]
fn windows_load_from_json_as_well_as_csv() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "linear.json", MEMORYLESS_LINEAR);
    write(dir.path(), "z.json", r#"{"values":[[0.25],[-1.5],[3.0]]}"#);
    let out = rescert(
        dir.path(),
        &[
            "eval",
            "--system",
            "linear.json",
            "--input",
            "z.json",
            "--weighting",
            GEOMETRIC_HALF,
            "--mode",
            "forward",
            "--out",
            "states.csv",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("states.csv")).unwrap();
    assert!(csv.lines().nth(3).unwrap().ends_with("3.0"));
}

#[test]
fn forgetting_experiment_writes_gap_csv() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "esn.json", ESN_CONTRACTING);
    write(dir.path(), "u.csv", "1.0\n0.5\n-0.5\n");
    write(dir.path(), "v.csv", "-1.0\n0.0\n0.25\n");
    write(dir.path(), "zf.csv", "0.2\n0.4\n0.1\n-0.3\n0.6\n");
    let out = rescert(
        dir.path(),
        &[
            "forgetting",
            "--system",
            "esn.json",
            "--weighting",
            GEOMETRIC_HALF,
            "--kind",
            "input",
            "--past-a",
            "u.csv",
            "--past-b",
            "v.csv",
            "--future",
            "zf.csv",
            "--envelope",
            "--out",
            "gaps.csv",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("violations 0"));
    let csv = fs::read_to_string(dir.path().join("gaps.csv")).unwrap();
    assert!(csv.lines().next().unwrap().starts_with("t,gap,envelope"));
    assert_eq!(csv.lines().count(), 6);

    let out = rescert(
        dir.path(),
        &[
            "forgetting",
            "--system",
            "esn.json",
            "--weighting",
            GEOMETRIC_HALF,
            "--kind",
            "state",
            "--input",
            "zf.csv",
            "--x0",
            "[0.9]",
            "--x1",
            "[-0.9]",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("violations 0"));
}

#[test]
fn derivative_check_passes_for_smooth_families() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "esn.json", ESN_CONTRACTING);
    let out = rescert(
        dir.path(),
        &[
            "derivative-check",
            "--system",
            "esn.json",
            "--weighting",
            GEOMETRIC_HALF,
            "--trials",
            "5",
            "--depth",
            "25",
            "--seed",
            "7",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
}

#[test]
fn bound_check_reports_zero_violations_for_tanh() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "tanh.json",
        r#"{"family":"esn","A":[[0.0]],"c":[[1.0]],"zeta":[0.0],"sigma":"tanh"}"#,
    );
    let out = rescert(
        dir.path(),
        &[
            "volterra-extract",
            "--system",
            "tanh.json",
            "--fd",
            "--order",
            "3",
            "--memory",
            "0",
            "--out",
            "k.json",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = rescert(
        dir.path(),
        &[
            "bound-check",
            "--system",
            "tanh.json",
            "--kernels",
            "k.json",
            "--weighting",
            GEOMETRIC_HALF,
            "--ball-m",
            "1.0",
            "--ball-l",
            "1.0",
            "--trials",
            "6",
            "--seed",
            "3",
            "--out",
            "report.json",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("total violations: 0"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["total_violations"], 0);
}

#[test]
fn sweep_emits_a_deterministic_grid() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "esn.json", ESN_CONTRACTING);
    for name in ["s1.csv", "s2.csv"] {
        let out = rescert(
            dir.path(),
            &[
                "sweep",
                "--system",
                "esn.json",
                "--weighting",
                GEOMETRIC_HALF,
                "--param",
                "a-scale=0.5:2.0:4",
                "--param2",
                "lambda=0.4:0.8:3",
                "--out",
                name,
            ],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let s1 = fs::read(dir.path().join("s1.csv")).unwrap();
    let s2 = fs::read(dir.path().join("s2.csv")).unwrap();
    assert_eq!(s1, s2);

    let text = String::from_utf8(s1).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "param1,value1,param2,value2,lhs,verdict,filter_lipschitz");
    assert_eq!(lines.len(), 1 + 4 * 3);
    // Scaling A to 2.0 at lambda 0.4 gives lhs = 0.4 * 2 * 2.5 = 2 > 1.
    assert!(lines.iter().any(|l| l.contains("not-certified")));
    assert!(lines.iter().any(|l| l.contains(",certified")));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "esn.json", ESN_CONTRACTING);
    write(
        dir.path(),
        "run.json",
        r#"{"system":"esn.json","weighting":"{\"kind\":\"geometric\",\"lambda\":0.5}","mode":"picard","tol":1e-12,"T":200,"seed":0}"#,
    );
    write(dir.path(), "z.csv", "0.1\n0.2\n0.3\n");
    let out = rescert(
        dir.path(),
        &["eval", "--config", "run.json", "--input", "z.csv", "--out", "s.csv"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("s.csv").exists());

    // Flag overrides the config weighting with an invalid one: the error
    // proves the flag won.
    let out = rescert(
        dir.path(),
        &[
            "eval",
            "--config",
            "run.json",
            "--input",
            "z.csv",
            "--weighting",
            r#"{"kind":"geometric","lambda":1.5}"#,
        ],
    );
    assert_eq!(out.status.code(), Some(1));
}
