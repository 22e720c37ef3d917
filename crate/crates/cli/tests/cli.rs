use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::tempdir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multiphoton"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    stdout(&out)
}

/// The number after `label` on the first line that starts with it.
fn reported(text: &str, label: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(label))
        .and_then(|rest| rest.split_whitespace().next())
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| panic!("no '{label}' in\n{text}"))
}

fn csv_values(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn analytic_reports_classical_visibilities() {
    let out = ok(&["analytic", "--kind", "coherent", "--order", "3", "--scheme", "symmetric-opposite"]);
    assert!((reported(&out, "visibility") - 9.0 / 11.0).abs() < 1e-9);
    assert!(out.contains("PASS"));
    let out = ok(&["analytic", "--kind", "thermal", "--order", "4", "--scheme", "double-speed"]);
    assert!((reported(&out, "visibility") - 7.0 / 9.0).abs() < 1e-9);
    let out = ok(&["analytic", "--kind", "coherent", "--order", "3", "--scheme", "single-detector"]);
    assert!((reported(&out, "visibility") - 0.5f64.sqrt()).abs() < 1e-9);
    assert!(out.contains("INFO"));
}

#[test]
fn limits_table_has_six_rows() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("limits.json");
    let out = ok(&["limits", "--out", p(&path)]);
    assert_eq!(out.lines().count(), 7);
    let rows: Vec<Value> = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let got: Vec<f64> = rows.iter().map(|r| r["visibility"].as_f64().unwrap()).collect();
    let expected = [0.5, 9.0 / 11.0, 17.0 / 18.0, 1.0 / 3.0, 0.6, 7.0 / 9.0];
    for (g, e) in got.iter().zip(expected) {
        assert!((g - e).abs() < 1e-12);
    }
}

#[test]
fn mc_output_is_reproducible_across_runs_and_workers() {
    let dir = tempdir().unwrap();
    let base = ["mc", "--kind", "coherent", "--order", "3", "--samples", "100000", "--grid-points", "13"];
    let files: Vec<String> = ["1", "1", "3"]
        .iter()
        .enumerate()
        .map(|(i, workers)| {
            let path = dir.path().join(format!("run{i}.csv"));
            let mut args = base.to_vec();
            args.extend(["--workers", workers, "--out", p(&path)]);
            ok(&args);
            fs::read_to_string(&path).unwrap()
        })
        .collect();
    assert_eq!(files[0], files[1]);
    assert_eq!(files[0], files[2]);
    assert_eq!(files[0].lines().next(), Some("x_rad,g_value,stderr"));
}

#[test]
fn mc_visibilities() {
    let out = ok(&["mc", "--kind", "coherent", "--order", "4"]);
    assert!((reported(&out, "visibility") - 17.0 / 18.0).abs() < 0.03);
    let out = ok(&[
        "mc",
        "--kind",
        "thermal",
        "--order",
        "3",
        "--coherence-width",
        "6.283185307179586",
        "--samples",
        "20000",
    ]);
    let v = reported(&out, "visibility");
    assert!((0.30..=0.60).contains(&v), "{v}");
}

#[test]
fn csv_and_json_carry_the_same_numbers() {
    let dir = tempdir().unwrap();
    let csv = dir.path().join("g.csv");
    let json = dir.path().join("g.json");
    let args = ["mc", "--kind", "thermal", "--order", "4", "--samples", "5000", "--grid-points", "9"];
    ok(&[&args[..], &["--out", p(&csv)]].concat());
    ok(&[&args[..], &["--out", p(&json)]].concat());
    let rows = csv_values(&csv);
    let j: Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    for (k, key) in ["xs", "values", "stderrs"].iter().enumerate() {
        let col: Vec<f64> = j[key].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert_eq!(col.len(), rows.len());
        for (a, row) in col.iter().zip(&rows) {
            assert!((a - row[k]).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}

#[test]
fn plotting_leaves_outputs_unchanged() {
    let dir = tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let svg = dir.path().join("plot.svg");
    let args = ["analytic", "--kind", "thermal", "--order", "3", "--grid-points", "50"];
    let out_a = ok(&[&args[..], &["--out", p(&a)]].concat());
    let out_b = ok(&[&args[..], &["--out", p(&b), "--plot", p(&svg)]].concat());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(out_a, out_b);
    let svg = fs::read_to_string(&svg).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline") && svg.contains("stroke-dasharray"));
}

#[test]
fn config_file_supplies_defaults_that_flags_override() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"kind": "thermal", "order": 4, "scheme": "double-speed"}"#).unwrap();
    let out = ok(&["analytic", "--config", p(&cfg)]);
    assert!((reported(&out, "visibility") - 7.0 / 9.0).abs() < 1e-9);
    let out = ok(&["analytic", "--config", p(&cfg), "--kind", "coherent"]);
    assert!((reported(&out, "visibility") - 17.0 / 18.0).abs() < 1e-9);

    fs::write(&cfg, r#"{"kind": "thermal", "colour": "red"}"#).unwrap();
    assert_eq!(run(&["analytic", "--config", p(&cfg), "--order", "3"]).status.code(), Some(2));
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["analytic", "--order", "3"]).status.code(), Some(2));
    assert_eq!(run(&["analytic", "--kind", "coherent"]).status.code(), Some(2));
    assert_eq!(run(&["analytic", "--kind", "plasma", "--order", "3"]).status.code(), Some(2));
    assert_eq!(
        run(&["analytic", "--kind", "coherent", "--order", "3", "--scheme", "double-speed"]).status.code(),
        Some(2)
    );
    assert_eq!(run(&["mc", "--kind", "coherent", "--order", "3", "--samples", "1001"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));

    let dir = tempdir().unwrap();
    let model = dir.path().join("model.json");
    fs::write(&model, r#"{"kind": "custom", "moments": {"2": 0.5, "3": 1.0, "4": 1.0}}"#).unwrap();
    let out = run(&["analytic", "--model", p(&model), "--order", "3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn frames_pipeline_end_to_end() {
    let dir = tempdir().unwrap();
    let stack = dir.path().join("stack");
    let processed = dir.path().join("processed");
    ok(&["frames", "synth", "--kind", "coherent", "--frames", "500", "--out", p(&stack)]);
    let out = ok(&["frames", "process", p(&stack), "--roi", "20,7,600,50", "--out", p(&processed)]);
    let summary: Value = serde_json::from_str(&fs::read_to_string(processed.join("summary.json")).unwrap()).unwrap();
    let g3 = summary["g3_visibility"].as_f64().unwrap();
    let g4 = summary["g4_visibility"].as_f64().unwrap();
    assert!(g3 >= 0.70, "g3 {g3}");
    assert!(g4 >= 0.85, "g4 {g4}");
    assert!(summary["intensity_fringe_visibility"].as_f64().unwrap() < 0.1);
    assert!((reported(&out, "g3 visibility") - g3).abs() < 1e-4);
    for name in ["intensity.csv", "g3.csv", "g4.csv"] {
        assert!(!csv_values(&processed.join(name)).is_empty());
    }

    let out = run(&["frames", "process", p(&stack), "--roi", "0,0,700,50"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ROI"));
}

#[test]
fn frozen_phase_gives_flat_g3() {
    let dir = tempdir().unwrap();
    let stack = dir.path().join("stack");
    let processed = dir.path().join("processed");
    ok(&[
        "frames", "synth", "--kind", "coherent", "--frames", "40", "--theta", "0", "--fringe-phase", "0.1",
        "--noiseless", "--format", "csv", "--out", p(&stack),
    ]);
    ok(&["frames", "process", p(&stack), "--out", p(&processed), "--format", "json"]);
    let g3: Value = serde_json::from_str(&fs::read_to_string(processed.join("g3.json")).unwrap()).unwrap();
    for v in g3["values"].as_array().unwrap() {
        assert!((v.as_f64().unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn malformed_frames_are_located() {
    let dir = tempdir().unwrap();
    let stack = dir.path().join("stack");
    ok(&["frames", "synth", "--kind", "thermal", "--frames", "4", "--width", "80", "--height", "6", "--format", "csv", "--out", p(&stack)]);
    let bad = stack.join("frame_00002.csv");
    let mut text = fs::read_to_string(&bad).unwrap();
    text = text.replacen(',', ",x", 1);
    fs::write(&bad, text).unwrap();
    let out = run(&["frames", "process", p(&stack)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("frame_00002.csv") && err.contains("line 1, column 2"), "{err}");
}

#[test]
fn verify_passes() {
    let out = ok(&["verify", "--trials", "200"]);
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 3);
}
