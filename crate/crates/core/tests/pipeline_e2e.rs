//! End-to-end pipeline runs over small generated scenarios.

use botdet::evaluate::evaluate;
use botdet::model::Config;
use botdet::pipeline::{load_summary, run_pipeline, PipelineOptions};
use botdet::sim::{generate, BotCohortSpec, ProtocolStyle, ScenarioSpec};

fn base_config() -> Config {
    let mut cfg = Config::default();
    cfg.whitelist_domains = vec!["google.com".to_string()];
    cfg
}

fn irc_scenario(hours: f64, n_normal: u32, n_bots: u32, seed: u64) -> ScenarioSpec {
    ScenarioSpec {
        duration_hours: hours,
        n_normal_hosts: n_normal,
        whitelist_sync_hosts: 0,
        seed,
        normal: Default::default(),
        bot_cohorts: vec![BotCohortSpec {
            n_bots,
            protocol_style: ProtocolStyle::IrcPersistent,
            scan_every_windows: 1,
            ..Default::default()
        }],
    }
}

#[test]
fn irc_cohort_is_flagged_quickly_with_no_false_positives() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.jsonl");
    let labels = dir.path().join("labels.json");
    let spec = irc_scenario(4.0, 10, 4, 21);
    generate(&spec, &trace, &labels).unwrap();

    let out = dir.path().join("out");
    let stats = run_pipeline(&trace, &base_config(), &out, &PipelineOptions::default()).unwrap();
    assert!(stats.windows >= 12);
    assert!(stats.clusters > 0, "expected clusters, stats: {stats:?}");

    let report = evaluate(&out, &labels).unwrap();
    assert_eq!(report.detection_rate, 1.0, "all four bots flagged: {report:?}");
    assert_eq!(report.false_positives, 0);
    // Max per-window score forces detection by the seventh active window.
    assert!(report.first_detection_window.values().all(|&w| w <= 7), "{report:?}");
}

#[test]
fn rerunning_the_pipeline_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.jsonl");
    let labels = dir.path().join("labels.json");
    generate(&irc_scenario(1.5, 6, 3, 5), &trace, &labels).unwrap();

    let cfg = base_config();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    run_pipeline(&trace, &cfg, &out_a, &PipelineOptions::default()).unwrap();
    run_pipeline(&trace, &cfg, &out_b, &PipelineOptions::default()).unwrap();
    assert_eq!(
        std::fs::read(out_a.join("report.jsonl")).unwrap(),
        std::fs::read(out_b.join("report.jsonl")).unwrap()
    );
    assert_eq!(
        std::fs::read(out_a.join("summary.json")).unwrap(),
        std::fs::read(out_b.join("summary.json")).unwrap()
    );
}

#[test]
fn dump_files_are_written_when_requested() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.jsonl");
    let labels = dir.path().join("labels.json");
    generate(&irc_scenario(1.0, 4, 2, 9), &trace, &labels).unwrap();
    let out = dir.path().join("out");
    run_pipeline(&trace, &base_config(), &out, &PipelineOptions { dump: true }).unwrap();
    for name in ["netflows.jsonl", "alerts.jsonl", "clusters.jsonl"] {
        let content = std::fs::read_to_string(out.join(name)).unwrap();
        assert!(!content.is_empty(), "{name} should have content");
    }
    let summary = load_summary(&out).unwrap();
    assert!(summary.windows >= 3);
}
