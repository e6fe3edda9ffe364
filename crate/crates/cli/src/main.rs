//! CLI for trace generation, pipeline runs, and detection evaluation.
//!
//! Log verbosity is controlled by the `RUST_LOG` environment variable.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use botdet::evaluate::evaluate;
use botdet::ingest::load_whitelist;
use botdet::model::Config;
use botdet::pipeline::{load_summary, run_pipeline, PipelineOptions};
use botdet::sim::{generate, ScenarioSpec};

#[derive(Parser)]
#[command(name = "botdet", version, about = "Netflow-behavior botnet detection over packet traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled trace from a scenario file.
    Generate {
        /// Scenario description (JSON).
        #[arg(long)]
        spec: PathBuf,
        /// Output trace path (JSONL events).
        #[arg(long)]
        out: PathBuf,
        /// Output ground-truth label path (JSON).
        #[arg(long)]
        labels: PathBuf,
    },
    /// Run the detection pipeline over a trace.
    Run {
        /// Input trace (JSONL events).
        #[arg(long)]
        trace: PathBuf,
        /// Config file (key = value lines); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for report.jsonl and summary.json.
        #[arg(long)]
        out: PathBuf,
        /// Newline-delimited whitelist domain file, appended to the
        /// config's whitelist_domains.
        #[arg(long)]
        whitelist: Option<PathBuf>,
        /// Disable the whitelist netflow filtering rule.
        #[arg(long)]
        no_whitelist_rule: bool,
        /// Also dump netflows, alerts, and clusters as JSONL.
        #[arg(long)]
        dump: bool,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Compare a run's verdicts against ground-truth labels.
    Evaluate {
        /// Run output directory or summary.json path.
        #[arg(long)]
        report: PathBuf,
        /// Ground-truth label file from `generate`.
        #[arg(long)]
        labels: PathBuf,
    },
    /// Print a run's per-host verdicts.
    Report {
        /// Run output directory or summary.json path.
        #[arg(long)]
        summary: PathBuf,
        /// Only show hosts with nonzero peak score.
        #[arg(long)]
        active_only: bool,
    },
}

/// Per-field config overrides; each flag mirrors a config key.
#[derive(Args)]
struct ConfigOverrides {
    #[arg(long)]
    tw_size_secs: Option<u64>,
    #[arg(long)]
    max_num_tw: Option<u64>,
    #[arg(long)]
    corr_thr: Option<f64>,
    #[arg(long)]
    bot_thr: Option<f64>,
    #[arg(long)]
    max_tw_score: Option<f64>,
    #[arg(long)]
    bulky_thr_bytes: Option<u64>,
    #[arg(long)]
    dist_thr: Option<f64>,
    /// Comma-separated CIDR list.
    #[arg(long)]
    internal_prefixes: Option<String>,
    /// Comma-separated domain list.
    #[arg(long)]
    whitelist_domains: Option<String>,
    #[arg(long)]
    payload_cap: Option<usize>,
    #[arg(long)]
    scan_ports_thr: Option<usize>,
    #[arg(long)]
    scan_hosts_thr: Option<usize>,
    #[arg(long)]
    scan_window_secs: Option<u64>,
    #[arg(long)]
    idle_timeout_secs: Option<u64>,
    #[arg(long)]
    xmeans_kmax: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigOverrides {
    fn apply(&self, cfg: &mut Config) -> Result<()> {
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            };
        }
        set!(tw_size_secs);
        set!(max_num_tw);
        set!(corr_thr);
        set!(bot_thr);
        set!(max_tw_score);
        set!(bulky_thr_bytes);
        set!(dist_thr);
        set!(payload_cap);
        set!(scan_ports_thr);
        set!(scan_hosts_thr);
        set!(scan_window_secs);
        set!(idle_timeout_secs);
        set!(xmeans_kmax);
        set!(seed);
        if let Some(s) = &self.internal_prefixes {
            cfg.set("internal_prefixes", s).context("--internal-prefixes")?;
        }
        if let Some(s) = &self.whitelist_domains {
            cfg.set("whitelist_domains", s).context("--whitelist-domains")?;
        }
        Ok(())
    }
}

fn main() {
    env_logger::init();
    if let Err(err) = dispatch(Cli::parse()) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { spec, out, labels } => {
            let scenario = ScenarioSpec::load(&spec)?;
            let stats = generate(&scenario, &out, &labels)?;
            println!("{}", serde_json::to_string_pretty(&stats)?);
        }
        Command::Run { trace, config, out, whitelist, no_whitelist_rule, dump, overrides } => {
            let mut cfg = match config {
                Some(path) => Config::load(&path)?,
                None => Config::default(),
            };
            overrides.apply(&mut cfg)?;
            if let Some(path) = whitelist {
                let domains = load_whitelist(&path)
                    .with_context(|| format!("whitelist {}", path.display()))?;
                cfg.whitelist_domains.extend(domains);
            }
            if no_whitelist_rule {
                cfg.whitelist_rule = false;
            }
            cfg.validate()?;
            let stats = run_pipeline(&trace, &cfg, &out, &PipelineOptions { dump })?;
            println!("{}", serde_json::to_string_pretty(&stats)?);
        }
        Command::Evaluate { report, labels } => {
            let eval = evaluate(&report, &labels)?;
            println!("{}", serde_json::to_string_pretty(&eval)?);
        }
        Command::Report { summary, active_only } => {
            let summary = load_summary(&summary)?;
            println!(
                "{:<16} {:>12} {:>12} {:>9} {:>14}",
                "host", "final_score", "peak_score", "flagged", "first_flagged"
            );
            for v in &summary.hosts {
                if active_only && v.peak_score == 0.0 {
                    continue;
                }
                println!(
                    "{:<16} {:>12.2} {:>12.2} {:>9} {:>14}",
                    v.host.to_string(),
                    v.final_score,
                    v.peak_score,
                    v.flagged,
                    v.first_flagged_window.map_or("-".to_string(), |w| w.to_string()),
                );
            }
            println!(
                "\n{} windows, {} events, {} of {} hosts flagged (bot_thr = {})",
                summary.windows,
                summary.events,
                summary.flagged_hosts.len(),
                summary.hosts.len(),
                summary.bot_thr,
            );
        }
    }
    Ok(())
}
