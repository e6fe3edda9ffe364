//! End-to-end run driver: streams a trace through ingest, flow generation,
//! scan detection, filtering, clustering, and correlation in window order,
//! writing per-window score rows and a final summary.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, BTreeMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{cluster_alerts, cluster_netflows};
use crate::correlate::{update_and_report, ScoreTable, WindowStore};
use crate::filter::{filter_alerts, filter_netflows};
use crate::flowgen::FlowTable;
use crate::ingest::{dispatch, parse_trace, DomainIpMap, IngestError, Route, REORDER_TOLERANCE_US};
use crate::model::{window_index, Config, ConfigError, HostId, PacketEvent};
use crate::scandetect;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Default)]
pub struct PipelineOptions {
    /// Also write netflows.jsonl, alerts.jsonl, and clusters.jsonl next to
    /// the report.
    pub dump: bool,
}

/// Counters for one run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunStats {
    pub events: u64,
    pub windows: u64,
    pub netflows: u64,
    pub netflows_kept: u64,
    pub alerts: u64,
    pub clusters: u64,
    pub flagged_hosts: u64,
}

/// Final per-host verdict in the run summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HostVerdict {
    pub host: HostId,
    pub final_score: f64,
    pub peak_score: f64,
    pub flagged: bool,
    pub first_flagged_window: Option<u64>,
}

/// Contents of summary.json.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub windows: u64,
    pub events: u64,
    pub bot_thr: f64,
    pub hosts: Vec<HostVerdict>,
    pub flagged_hosts: Vec<HostId>,
}

pub const REPORT_FILE: &str = "report.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

/// Runs the full detection pipeline over a trace file, writing
/// `report.jsonl` (one score row per host per window) and `summary.json`
/// into `out_dir`. An empty trace produces an empty report.
pub fn run_pipeline(
    trace: &Path,
    cfg: &Config,
    out_dir: &Path,
    opts: &PipelineOptions,
) -> Result<RunStats, PipelineError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| output_err(out_dir, e))?;

    let mut run = Run::new(cfg, out_dir, opts)?;

    // Events are admitted through a small reorder buffer spanning the ingest
    // tolerance, so downstream stages always see a fully sorted stream.
    let mut pending: BinaryHeap<Reverse<OrderedEvent>> = BinaryHeap::new();
    let mut seq = 0u64;
    let mut max_ts = 0u64;
    for event in parse_trace(trace)? {
        let event = event?;
        max_ts = max_ts.max(event.ts);
        pending.push(Reverse(OrderedEvent { ts: event.ts, seq, event }));
        seq += 1;
        while pending
            .peek()
            .is_some_and(|Reverse(e)| e.ts + REORDER_TOLERANCE_US <= max_ts)
        {
            let Reverse(oe) = pending.pop().expect("peeked");
            run.feed(oe.event)?;
        }
    }
    while let Some(Reverse(oe)) = pending.pop() {
        run.feed(oe.event)?;
    }
    run.finish()
}

fn output_err(path: &Path, source: std::io::Error) -> PipelineError {
    PipelineError::Output { path: path.display().to_string(), source }
}

struct OrderedEvent {
    ts: u64,
    seq: u64,
    event: PacketEvent,
}

impl PartialEq for OrderedEvent {
    fn eq(&self, other: &Self) -> bool {
        (self.ts, self.seq) == (other.ts, other.seq)
    }
}
impl Eq for OrderedEvent {}
impl PartialOrd for OrderedEvent {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OrderedEvent {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.ts, self.seq).cmp(&(other.ts, other.seq))
    }
}

struct HostRecord {
    final_score: f64,
    peak_score: f64,
    first_flagged_window: Option<u64>,
}

struct Run<'a> {
    cfg: &'a Config,
    out_dir: PathBuf,
    report: BufWriter<File>,
    dumps: Option<Dumps>,
    // Streaming state, created on the first event.
    epoch: Option<u64>,
    current_window: u64,
    flows: Option<FlowTable>,
    window_events: Vec<PacketEvent>,
    map: DomainIpMap,
    store: WindowStore,
    table: ScoreTable,
    next_alert_id: u64,
    next_cluster_id: u64,
    hosts: BTreeMap<HostId, HostRecord>,
    stats: RunStats,
}

struct Dumps {
    netflows: BufWriter<File>,
    alerts: BufWriter<File>,
    clusters: BufWriter<File>,
}

impl<'a> Run<'a> {
    fn new(cfg: &'a Config, out_dir: &Path, opts: &PipelineOptions) -> Result<Self, PipelineError> {
        let open = |name: &str| -> Result<BufWriter<File>, PipelineError> {
            let path = out_dir.join(name);
            Ok(BufWriter::new(File::create(&path).map_err(|e| output_err(&path, e))?))
        };
        let dumps = if opts.dump {
            Some(Dumps {
                netflows: open("netflows.jsonl")?,
                alerts: open("alerts.jsonl")?,
                clusters: open("clusters.jsonl")?,
            })
        } else {
            None
        };
        Ok(Run {
            cfg,
            out_dir: out_dir.to_path_buf(),
            report: open(REPORT_FILE)?,
            dumps,
            epoch: None,
            current_window: 0,
            flows: None,
            window_events: Vec::new(),
            map: DomainIpMap::new(),
            store: WindowStore::new(),
            table: ScoreTable::new(),
            next_alert_id: 0,
            next_cluster_id: 0,
            hosts: BTreeMap::new(),
            stats: RunStats::default(),
        })
    }

    /// Consumes one event from the sorted stream, closing windows as the
    /// stream crosses their boundaries.
    fn feed(&mut self, event: PacketEvent) -> Result<(), PipelineError> {
        let epoch = *self.epoch.get_or_insert(event.ts);
        if self.flows.is_none() {
            self.flows = Some(FlowTable::new(
                epoch,
                self.cfg.tw_size_us(),
                self.cfg.idle_timeout_us(),
                self.cfg.payload_cap,
            ));
        }
        let window = window_index(event.ts, epoch, self.cfg.tw_size_us())
            .expect("sorted stream cannot precede its first timestamp");
        while self.current_window < window {
            self.close_window()?;
        }
        self.stats.events += 1;
        let routes = dispatch(&event);
        if routes.contains(&Route::DomainIpMapping) {
            self.map.record_dns(&event);
        }
        if routes.contains(&Route::NetflowGenerating) {
            self.flows.as_mut().expect("created above").observe(&event);
        }
        if routes.contains(&Route::AlertGenerating) {
            // Scan detection is payload-agnostic; buffering the window's
            // events without payloads keeps per-window memory flat.
            let mut slim = event;
            slim.payload = Vec::new();
            self.window_events.push(slim);
        }
        Ok(())
    }

    /// Closes `current_window`: emits and filters flows and alerts, clusters
    /// them, updates scores, and writes the window's report rows.
    fn close_window(&mut self) -> Result<(), PipelineError> {
        let window = self.current_window;
        let flows = self.flows.as_mut().expect("events seen").close_window(window);
        let events = std::mem::take(&mut self.window_events);
        let alerts = scandetect::detect(&events, window, self.cfg, &mut self.next_alert_id);
        self.stats.netflows += flows.len() as u64;
        self.stats.alerts += alerts.len() as u64;

        if let Some(dumps) = &mut self.dumps {
            for f in &flows {
                write_json_line(&mut dumps.netflows, &self.out_dir, f)?;
            }
            for a in &alerts {
                write_json_line(&mut dumps.alerts, &self.out_dir, a)?;
            }
        }

        let kept_flows = filter_netflows(flows, &self.map, self.cfg);
        let kept_alerts = filter_alerts(alerts, self.cfg);
        self.stats.netflows_kept += kept_flows.len() as u64;

        let mut clusters = cluster_netflows(&kept_flows, self.cfg, window, &mut self.next_cluster_id);
        clusters.extend(cluster_alerts(&kept_alerts, window, &mut self.next_cluster_id));
        self.stats.clusters += clusters.len() as u64;
        if let Some(dumps) = &mut self.dumps {
            for c in &clusters {
                write_json_line(&mut dumps.clusters, &self.out_dir, c)?;
            }
        }

        let (rows, _flagged) =
            update_and_report(window, clusters, &mut self.store, &mut self.table, self.cfg);
        for row in &rows {
            let record = self.hosts.entry(row.host).or_insert(HostRecord {
                final_score: 0.0,
                peak_score: 0.0,
                first_flagged_window: None,
            });
            record.final_score = row.cumulative_score;
            record.peak_score = record.peak_score.max(row.cumulative_score);
            if row.flagged && record.first_flagged_window.is_none() {
                record.first_flagged_window = Some(window);
            }
            write_json_line(&mut self.report, &self.out_dir, row)?;
        }

        self.stats.windows += 1;
        self.current_window += 1;
        Ok(())
    }

    fn finish(mut self) -> Result<RunStats, PipelineError> {
        if self.epoch.is_some() {
            // Close the window holding the last events.
            self.close_window()?;
        }
        let hosts: Vec<HostVerdict> = self
            .hosts
            .iter()
            .map(|(host, r)| HostVerdict {
                host: *host,
                final_score: r.final_score,
                peak_score: r.peak_score,
                flagged: r.first_flagged_window.is_some(),
                first_flagged_window: r.first_flagged_window,
            })
            .collect();
        let flagged_hosts: Vec<HostId> =
            hosts.iter().filter(|h| h.flagged).map(|h| h.host).collect();
        self.stats.flagged_hosts = flagged_hosts.len() as u64;
        let summary = RunSummary {
            windows: self.stats.windows,
            events: self.stats.events,
            bot_thr: self.cfg.bot_thr,
            hosts,
            flagged_hosts,
        };
        let path = self.out_dir.join(SUMMARY_FILE);
        let mut out = BufWriter::new(File::create(&path).map_err(|e| output_err(&path, e))?);
        serde_json::to_writer_pretty(&mut out, &summary)
            .map_err(|e| output_err(&path, e.into()))?;
        out.write_all(b"\n").map_err(|e| output_err(&path, e))?;
        out.flush().map_err(|e| output_err(&path, e))?;
        self.report.flush().map_err(|e| output_err(&self.out_dir.join(REPORT_FILE), e))?;
        if let Some(dumps) = &mut self.dumps {
            for (w, name) in [
                (&mut dumps.netflows, "netflows.jsonl"),
                (&mut dumps.alerts, "alerts.jsonl"),
                (&mut dumps.clusters, "clusters.jsonl"),
            ] {
                w.flush().map_err(|e| output_err(&self.out_dir.join(name), e))?;
            }
        }
        log::info!(
            "processed {} events over {} windows: {} netflows ({} kept), {} alerts, {} clusters, {} hosts flagged",
            self.stats.events,
            self.stats.windows,
            self.stats.netflows,
            self.stats.netflows_kept,
            self.stats.alerts,
            self.stats.clusters,
            self.stats.flagged_hosts,
        );
        Ok(self.stats)
    }
}

fn write_json_line<T: Serialize>(
    w: &mut BufWriter<File>,
    out_dir: &Path,
    value: &T,
) -> Result<(), PipelineError> {
    serde_json::to_writer(&mut *w, value).map_err(|e| output_err(out_dir, e.into()))?;
    w.write_all(b"\n").map_err(|e| output_err(out_dir, e))
}

/// Reads a summary back from a run directory or direct file path.
pub fn load_summary(path: &Path) -> Result<RunSummary, PipelineError> {
    let file = if path.is_dir() { path.join(SUMMARY_FILE) } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&file).map_err(|e| output_err(&file, e))?;
    serde_json::from_str(&text).map_err(|e| output_err(&file, e.into()))
}
