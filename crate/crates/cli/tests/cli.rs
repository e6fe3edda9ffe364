//! Black-box tests of the `botdet` binary: generate → run → evaluate →
//! report, plus the error exits.

use std::path::Path;
use std::process::{Command, Output};

fn botdet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_botdet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(path: &Path, content: &str) {
    std::fs::write(path, content).unwrap();
}

const SCENARIO: &str = r#"{
    "duration_hours": 3.0,
    "n_normal_hosts": 8,
    "seed": 31,
    "bot_cohorts": [
        {"n_bots": 4, "protocol_style": "irc_persistent", "scan_every_windows": 1}
    ]
}"#;

#[test]
fn generate_run_evaluate_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("scenario.json");
    let trace = dir.path().join("trace.jsonl");
    let labels = dir.path().join("labels.json");
    let config = dir.path().join("botdet.conf");
    let out = dir.path().join("out");
    write(&spec, SCENARIO);
    write(&config, "whitelist_domains = google.com,yahoo.com\n");

    let gen = botdet(&[
        "generate",
        "--spec", spec.to_str().unwrap(),
        "--out", trace.to_str().unwrap(),
        "--labels", labels.to_str().unwrap(),
    ]);
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));

    let run = botdet(&[
        "run",
        "--trace", trace.to_str().unwrap(),
        "--config", config.to_str().unwrap(),
        "--out", out.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(out.join("report.jsonl").exists());
    assert!(out.join("summary.json").exists());

    let eval = botdet(&[
        "evaluate",
        "--report", out.to_str().unwrap(),
        "--labels", labels.to_str().unwrap(),
    ]);
    assert!(eval.status.success(), "{}", String::from_utf8_lossy(&eval.stderr));
    let metrics: serde_json::Value = serde_json::from_slice(&eval.stdout).unwrap();
    assert_eq!(metrics["detection_rate"], 1.0);
    assert_eq!(metrics["false_positives"], 0);

    let report = botdet(&["report", "--summary", out.to_str().unwrap(), "--active-only"]);
    assert!(report.status.success());
    let text = String::from_utf8_lossy(&report.stdout);
    assert!(text.contains("flagged"));
    assert!(text.contains("10.0.0."));
}

#[test]
fn empty_trace_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("empty.jsonl");
    write(&trace, "");
    let out = dir.path().join("out");
    let run = botdet(&[
        "run",
        "--trace", trace.to_str().unwrap(),
        "--out", out.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(std::fs::read_to_string(out.join("report.jsonl")).unwrap(), "");
}

#[test]
fn malformed_trace_exits_nonzero_with_line_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("bad.jsonl");
    write(
        &trace,
        concat!(
            r#"{"ts_us":1,"proto":"tcp","src_ip":"10.0.0.1","dst_ip":"1.2.3.4","src_port":1,"dst_port":80}"#,
            "\n",
            r#"{"ts_us":2,"proto":"tcp","src_ip":"10.0.0.1","dst_ip":"1.2.3.4","src_port":70000,"dst_port":80}"#,
            "\n",
        ),
    );
    let run = botdet(&[
        "run",
        "--trace", trace.to_str().unwrap(),
        "--out", dir.path().join("out").to_str().unwrap(),
    ]);
    assert!(!run.status.success());
    let err = String::from_utf8_lossy(&run.stderr);
    assert!(err.contains("line 2"), "stderr: {err}");
}

#[test]
fn missing_whitelist_file_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    write(&trace, "");
    let run = botdet(&[
        "run",
        "--trace", trace.to_str().unwrap(),
        "--out", dir.path().join("out").to_str().unwrap(),
        "--whitelist", dir.path().join("nonexistent.txt").to_str().unwrap(),
    ]);
    assert!(!run.status.success());
}

#[test]
fn config_violations_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    write(&trace, "");
    let config = dir.path().join("bad.conf");
    write(&config, "corr_thr = 1.7\n");
    let run = botdet(&[
        "run",
        "--trace", trace.to_str().unwrap(),
        "--config", config.to_str().unwrap(),
        "--out", dir.path().join("out").to_str().unwrap(),
    ]);
    assert!(!run.status.success());

    let run = botdet(&[
        "run",
        "--trace", trace.to_str().unwrap(),
        "--out", dir.path().join("out2").to_str().unwrap(),
        "--dist-thr", "0",
    ]);
    assert!(!run.status.success());
}

#[test]
fn whitelist_rule_flag_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    write(&trace, "");
    let wl = dir.path().join("wl.txt");
    write(&wl, "google.com\n# comment\nyahoo.com\n");
    let run = botdet(&[
        "run",
        "--trace", trace.to_str().unwrap(),
        "--out", dir.path().join("out").to_str().unwrap(),
        "--whitelist", wl.to_str().unwrap(),
        "--no-whitelist-rule",
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
}

#[test]
fn invalid_scenario_spec_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.json");
    write(
        &spec,
        r#"{"duration_hours": 1.0, "bot_cohorts": [{"n_bots": 2, "protocol_style": "http_jittered", "cc_jitter_secs": 0}]}"#,
    );
    let gen = botdet(&[
        "generate",
        "--spec", spec.to_str().unwrap(),
        "--out", dir.path().join("t.jsonl").to_str().unwrap(),
        "--labels", dir.path().join("l.json").to_str().unwrap(),
    ]);
    assert!(!gen.status.success());
}
