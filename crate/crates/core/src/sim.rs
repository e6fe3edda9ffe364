//! Synthetic trace generation: normal campus-style web/DNS traffic mixed
//! with coordinated bot cohorts, plus ground-truth labels.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::Ipv4Addr;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::RawEvent;
use crate::model::{HostId, MICROS_PER_SEC};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("cannot read scenario {path}: {reason}")]
    Read { path: String, reason: String },
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

// ── Scenario description ─────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolStyle {
    /// One long-lived C&C connection per bot with periodic exchanges.
    IrcPersistent,
    /// A fresh C&C poll flow at a fixed period.
    HttpPeriodic,
    /// A fresh C&C poll flow after a uniform random wait.
    HttpJittered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanStyle {
    TcpPortscan,
    TcpPortsweep,
    UdpPortscan,
    UdpPortsweep,
    IcmpSweep,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BotCohortSpec {
    pub n_bots: u32,
    pub protocol_style: ProtocolStyle,
    /// Poll or exchange period for periodic styles, seconds.
    pub cc_period_secs: u64,
    /// Upper bound of the uniform wait for the jittered style, seconds.
    pub cc_jitter_secs: u64,
    /// C&C payload template length per direction, bytes.
    pub payload_len: usize,
    /// Fraction of template bytes re-randomized per flow.
    pub payload_noise: f64,
    /// Scan burst cadence in windows; 0 disables scanning.
    pub scan_every_windows: u64,
    pub scan_styles: Vec<ScanStyle>,
    /// Window in which the cohort becomes active.
    pub onset_window: u64,
}

impl Default for BotCohortSpec {
    fn default() -> Self {
        BotCohortSpec {
            n_bots: 4,
            protocol_style: ProtocolStyle::HttpPeriodic,
            cc_period_secs: 300,
            cc_jitter_secs: 0,
            payload_len: 600,
            // Calibrated against the deflate NCD: at 0.02 the pairwise
            // cohort distance stays well under the 0.35 cut; 0.05 already
            // crosses it.
            payload_noise: 0.02,
            scan_every_windows: 0,
            scan_styles: vec![ScanStyle::TcpPortscan, ScanStyle::TcpPortsweep],
            onset_window: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalProfile {
    /// Mean web flows per host per window (Poisson).
    pub flows_per_window: f64,
    /// Median request payload bytes (log-normal).
    pub req_bytes_median: f64,
    /// Median response payload bytes (log-normal).
    pub resp_bytes_median: f64,
    /// Probability a flow is a large download exceeding the bulky threshold.
    pub bulky_prob: f64,
    /// Probability a web flow targets the whitelisted service.
    pub whitelist_visit_prob: f64,
    /// Probability of an internal-to-internal chat flow per host per window.
    pub internal_chat_prob: f64,
    /// Probability of an externally initiated inbound flow per host per window.
    pub inbound_prob: f64,
    /// Payload bytes per packet.
    pub chunk_bytes: usize,
    /// Extra small packets appended per flow; inflates event counts for
    /// throughput scenarios without changing clustering behavior.
    pub pad_pkts_per_flow: u32,
}

impl Default for NormalProfile {
    fn default() -> Self {
        NormalProfile {
            flows_per_window: 6.0,
            req_bytes_median: 260.0,
            resp_bytes_median: 900.0,
            bulky_prob: 0.001,
            whitelist_visit_prob: 0.05,
            internal_chat_prob: 0.05,
            inbound_prob: 0.05,
            chunk_bytes: 1400,
            pad_pkts_per_flow: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub duration_hours: f64,
    pub n_normal_hosts: u32,
    /// Normal hosts that coincidentally synchronize requests to the
    /// whitelisted service (labeled normal; exercises the whitelist rule).
    pub whitelist_sync_hosts: u32,
    pub seed: u64,
    pub normal: NormalProfile,
    pub bot_cohorts: Vec<BotCohortSpec>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            duration_hours: 1.0,
            n_normal_hosts: 8,
            whitelist_sync_hosts: 0,
            seed: 1,
            normal: NormalProfile::default(),
            bot_cohorts: Vec::new(),
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if !self.duration_hours.is_finite() || self.duration_hours <= 0.0 {
            return Err(SimError::InvalidSpec("duration_hours must be positive".to_string()));
        }
        for (i, c) in self.bot_cohorts.iter().enumerate() {
            let fail = |msg: &str| Err(SimError::InvalidSpec(format!("cohort {i}: {msg}")));
            if c.n_bots == 0 {
                return fail("n_bots must be at least 1");
            }
            if c.payload_len == 0 {
                return fail("payload_len must be positive");
            }
            if !(0.0..1.0).contains(&c.payload_noise) {
                return fail("payload_noise must lie in [0, 1)");
            }
            match c.protocol_style {
                ProtocolStyle::HttpPeriodic if c.cc_jitter_secs != 0 => {
                    return fail("http_periodic requires cc_jitter_secs = 0");
                }
                ProtocolStyle::HttpJittered if c.cc_jitter_secs == 0 => {
                    return fail("http_jittered requires cc_jitter_secs > 0");
                }
                ProtocolStyle::IrcPersistent | ProtocolStyle::HttpPeriodic
                | ProtocolStyle::HttpJittered => {}
            }
            if c.protocol_style != ProtocolStyle::HttpJittered && c.cc_period_secs == 0 {
                return fail("cc_period_secs must be positive");
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ScenarioSpec, SimError> {
        let read_err = |reason: String| SimError::Read { path: path.display().to_string(), reason };
        let text = std::fs::read_to_string(path).map_err(|e| read_err(e.to_string()))?;
        let spec: ScenarioSpec =
            serde_json::from_str(&text).map_err(|e| read_err(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Ground-truth host labels accompanying a generated trace.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Labels {
    pub bot_hosts: Vec<HostId>,
    pub normal_hosts: Vec<HostId>,
}

impl Labels {
    pub fn load(path: &Path) -> Result<Labels, SimError> {
        let read_err = |reason: String| SimError::Read { path: path.display().to_string(), reason };
        let text = std::fs::read_to_string(path).map_err(|e| read_err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| read_err(e.to_string()))
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct GenStats {
    pub events: u64,
    pub normal_hosts: u64,
    pub bot_hosts: u64,
    pub windows: u64,
}

// ── Address plan ─────────────────────────────────────────────────────────────

const RESOLVER: Ipv4Addr = Ipv4Addr::new(10, 0, 255, 254);
const WHITELISTED_SERVICE: Ipv4Addr = Ipv4Addr::new(198, 51, 100, 10);
const WHITELISTED_DOMAIN: &str = "www.google.com";
const WEB_POOL_SIZE: u32 = 120;

/// Address of the idx-th generated internal host. Normal hosts come first,
/// then whitelist-sync hosts, then cohort members in declaration order.
pub fn internal_host_addr(idx: u32) -> Ipv4Addr {
    Ipv4Addr::new(10, 0, (idx / 250) as u8, (1 + idx % 250) as u8)
}

fn internal_host(idx: u32) -> Ipv4Addr {
    internal_host_addr(idx)
}

fn pool_server(idx: u32) -> Ipv4Addr {
    Ipv4Addr::new(203, 0, 113, (1 + idx % WEB_POOL_SIZE) as u8)
}

fn pool_domain(idx: u32) -> String {
    format!("site{}.example.org", idx % WEB_POOL_SIZE)
}

fn cc_server(cohort: usize) -> Ipv4Addr {
    Ipv4Addr::new(198, 18, 0, (1 + cohort) as u8)
}

fn scan_target(idx: u32) -> Ipv4Addr {
    Ipv4Addr::new(192, 0, 2, (1 + idx % 250) as u8)
}

// ── Event assembly ───────────────────────────────────────────────────────────

struct EventSink {
    lines: Vec<(u64, u64, String)>,
    seq: u64,
}

impl EventSink {
    fn new() -> Self {
        EventSink { lines: Vec::new(), seq: 0 }
    }

    fn push(&mut self, event: RawEvent) {
        let ts = event.ts_us;
        let line = serde_json::to_string(&event).expect("raw events always serialize");
        self.lines.push((ts, self.seq, line));
        self.seq += 1;
    }

    fn write(mut self, path: &Path) -> Result<u64, SimError> {
        let write_err = |source: std::io::Error| SimError::Write {
            path: path.display().to_string(),
            source,
        };
        self.lines.sort_unstable_by_key(|(ts, seq, _)| (*ts, *seq));
        let mut out = BufWriter::new(File::create(path).map_err(write_err)?);
        let n = self.lines.len() as u64;
        for (_, _, line) in self.lines {
            out.write_all(line.as_bytes()).map_err(write_err)?;
            out.write_all(b"\n").map_err(write_err)?;
        }
        out.flush().map_err(write_err)?;
        Ok(n)
    }
}

fn tcp_event(ts: u64, src: Ipv4Addr, sp: u16, dst: Ipv4Addr, dp: u16, flags: &str, payload: &[u8]) -> RawEvent {
    use base64::Engine;
    RawEvent {
        ts_us: ts,
        proto: "tcp".to_string(),
        src_ip: src.to_string(),
        dst_ip: dst.to_string(),
        src_port: sp,
        dst_port: dp,
        flags: Some(flags.to_string()),
        payload_b64: base64::engine::general_purpose::STANDARD.encode(payload),
        qname: None,
        answers: None,
        is_response: None,
    }
}

fn plain_event(ts: u64, proto: &str, src: Ipv4Addr, sp: u16, dst: Ipv4Addr, dp: u16) -> RawEvent {
    RawEvent {
        ts_us: ts,
        proto: proto.to_string(),
        src_ip: src.to_string(),
        dst_ip: dst.to_string(),
        src_port: sp,
        dst_port: dp,
        flags: None,
        payload_b64: String::new(),
        qname: None,
        answers: None,
        is_response: None,
    }
}

fn dns_pair(sink: &mut EventSink, ts: u64, host: Ipv4Addr, qname: &str, answer: Ipv4Addr) {
    let query = RawEvent {
        ts_us: ts,
        proto: "dns".to_string(),
        src_ip: host.to_string(),
        dst_ip: RESOLVER.to_string(),
        src_port: 40000,
        dst_port: 53,
        flags: None,
        payload_b64: String::new(),
        qname: Some(qname.to_string()),
        answers: None,
        is_response: Some(false),
    };
    let response = RawEvent {
        ts_us: ts + 2_000,
        proto: "dns".to_string(),
        src_ip: RESOLVER.to_string(),
        dst_ip: host.to_string(),
        src_port: 53,
        dst_port: 40000,
        flags: None,
        payload_b64: String::new(),
        qname: Some(qname.to_string()),
        answers: Some(vec![answer.to_string()]),
        is_response: Some(true),
    };
    sink.push(query);
    sink.push(response);
}

/// Copies a payload template, re-randomizing `noise` of its bytes. Cohort
/// members produce near-identical payloads whose pairwise compression
/// distance stays under the clustering cut.
pub fn noisy_payload(template: &[u8], noise: f64, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut out = template.to_vec();
    let flips = ((template.len() as f64) * noise).floor() as usize;
    for _ in 0..flips {
        let pos = rng.random_range(0..out.len());
        out[pos] = rng.random();
    }
    out
}

fn random_payload(len: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut out = vec![0u8; len];
    rng.fill_bytes(&mut out);
    out
}

struct FlowShape<'a> {
    src: Ipv4Addr,
    sport: u16,
    dst: Ipv4Addr,
    dport: u16,
    req: &'a [u8],
    resp: &'a [u8],
    chunk: usize,
    /// Inter-packet spacing, microseconds.
    spacing_us: u64,
    pad_pkts: u32,
}

/// Emits SYN, request chunks, response chunks, optional padding packets, and
/// a FIN. Returns the timestamp after the final packet.
fn emit_flow(sink: &mut EventSink, t0: u64, shape: &FlowShape) -> u64 {
    let FlowShape { src, sport, dst, dport, req, resp, chunk, spacing_us, pad_pkts } = *shape;
    let mut t = t0;
    sink.push(tcp_event(t, src, sport, dst, dport, "S", &[]));
    t += 2_000;
    sink.push(tcp_event(t, dst, dport, src, sport, "SA", &[]));
    t += 2_000;
    for part in req.chunks(chunk.max(1)) {
        sink.push(tcp_event(t, src, sport, dst, dport, "A", part));
        t += spacing_us;
    }
    for part in resp.chunks(chunk.max(1)) {
        sink.push(tcp_event(t, dst, dport, src, sport, "A", part));
        t += spacing_us;
    }
    for i in 0..pad_pkts {
        // Bare ACKs: they inflate event and packet counts without touching
        // payload counters or retained payloads.
        if i % 2 == 0 {
            sink.push(tcp_event(t, src, sport, dst, dport, "A", &[]));
        } else {
            sink.push(tcp_event(t, dst, dport, src, sport, "A", &[]));
        }
        t += spacing_us;
    }
    sink.push(tcp_event(t, src, sport, dst, dport, "FA", &[]));
    t
}

// ── Generation ───────────────────────────────────────────────────────────────

/// Generates a JSONL trace and a ground-truth label file for the scenario.
/// Fixed seeds give byte-identical outputs.
pub fn generate(
    spec: &ScenarioSpec,
    trace_path: &Path,
    labels_path: &Path,
) -> Result<GenStats, SimError> {
    spec.validate()?;
    let tw_us: u64 = 1200 * MICROS_PER_SEC;
    let duration_us = (spec.duration_hours * 3600.0 * MICROS_PER_SEC as f64) as u64;
    let n_windows = duration_us.div_ceil(tw_us);

    let mut sink = EventSink::new();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let n_normal = spec.n_normal_hosts + spec.whitelist_sync_hosts;
    let normal_hosts: Vec<Ipv4Addr> = (0..n_normal).map(internal_host).collect();
    let sync_hosts: Vec<Ipv4Addr> = (spec.n_normal_hosts..n_normal).map(internal_host).collect();
    let mut next_host = n_normal;
    let mut bot_hosts: Vec<Ipv4Addr> = Vec::new();
    let cohort_members: Vec<Vec<Ipv4Addr>> = spec
        .bot_cohorts
        .iter()
        .map(|c| {
            let members: Vec<Ipv4Addr> =
                (0..c.n_bots).map(|_| {
                    let ip = internal_host(next_host);
                    next_host += 1;
                    ip
                }).collect();
            bot_hosts.extend(&members);
            members
        })
        .collect();

    generate_normal_traffic(&mut sink, spec, &normal_hosts, n_windows, duration_us, &mut rng);
    generate_sync_traffic(&mut sink, &sync_hosts, n_windows, tw_us, spec.seed);
    for (idx, cohort) in spec.bot_cohorts.iter().enumerate() {
        generate_cohort_traffic(
            &mut sink,
            cohort,
            idx,
            &cohort_members[idx],
            n_windows,
            tw_us,
            duration_us,
            spec.seed,
        );
    }

    let events = sink.write(trace_path)?;

    let labels = Labels {
        bot_hosts: {
            let mut v: Vec<HostId> = bot_hosts.iter().copied().map(HostId).collect();
            v.sort();
            v
        },
        normal_hosts: {
            let mut v: Vec<HostId> = normal_hosts.iter().copied().map(HostId).collect();
            v.sort();
            v
        },
    };
    let labels_json =
        serde_json::to_string_pretty(&labels).expect("labels always serialize");
    std::fs::write(labels_path, labels_json + "\n").map_err(|source| SimError::Write {
        path: labels_path.display().to_string(),
        source,
    })?;

    Ok(GenStats {
        events,
        normal_hosts: normal_hosts.len() as u64,
        bot_hosts: bot_hosts.len() as u64,
        windows: n_windows,
    })
}

fn generate_normal_traffic(
    sink: &mut EventSink,
    spec: &ScenarioSpec,
    hosts: &[Ipv4Addr],
    n_windows: u64,
    duration_us: u64,
    rng: &mut ChaCha8Rng,
) {
    let p = &spec.normal;
    let tw_us: u64 = 1200 * MICROS_PER_SEC;
    let flows_dist = Poisson::new(p.flows_per_window.max(0.01)).expect("positive mean");
    let req_dist = LogNormal::new(p.req_bytes_median.ln(), 0.5).expect("finite");
    let resp_dist = LogNormal::new(p.resp_bytes_median.ln(), 0.9).expect("finite");

    // Bootstrap DNS so the whitelisted service and a few pool sites resolve
    // before any flows; the first query pins the trace epoch at t = 0.
    for (i, &host) in hosts.iter().enumerate() {
        let t = i as u64 * 3_000;
        dns_pair(sink, t, host, WHITELISTED_DOMAIN, WHITELISTED_SERVICE);
    }

    let mut sport: u16 = 2048;
    let next_sport = |sport: &mut u16| {
        *sport = sport.wrapping_add(1).max(2048);
        *sport
    };

    for w in 0..n_windows {
        let w_start = w * tw_us;
        for (hi, &host) in hosts.iter().enumerate() {
            let n_flows = flows_dist.sample(rng) as u64;
            for _ in 0..n_flows {
                let t0 = w_start + rng.random_range(0..tw_us - 60 * MICROS_PER_SEC);
                if t0 >= duration_us {
                    continue;
                }
                let whitelisted = rng.random_bool(p.whitelist_visit_prob);
                let (dst, dport) = if whitelisted {
                    (WHITELISTED_SERVICE, 443)
                } else {
                    let server = rng.random_range(0..WEB_POOL_SIZE);
                    if rng.random_bool(0.3) {
                        dns_pair(sink, t0.saturating_sub(5_000), host, &pool_domain(server), pool_server(server));
                    }
                    (pool_server(server), 80)
                };
                let req_len = (req_dist.sample(rng) as usize).clamp(40, 2_000);
                let bulky = rng.random_bool(p.bulky_prob);
                let (resp_len, chunk) = if bulky {
                    ((1_200_000 + rng.random_range(0..300_000)) as usize, 131_072)
                } else {
                    ((resp_dist.sample(rng) as usize).clamp(60, 20_000), p.chunk_bytes)
                };
                let req = random_payload(req_len, rng);
                let resp = random_payload(resp_len, rng);
                emit_flow(
                    sink,
                    t0,
                    &FlowShape {
                        src: host,
                        sport: next_sport(&mut sport),
                        dst,
                        dport,
                        req: &req,
                        resp: &resp,
                        chunk,
                        spacing_us: 50_000,
                        pad_pkts: p.pad_pkts_per_flow,
                    },
                );
            }

            // Light UDP chatter exercises the alert-generation route.
            if rng.random_bool(0.3) {
                let t = w_start + rng.random_range(0..tw_us);
                if t < duration_us {
                    sink.push(plain_event(t, "udp", host, 40123, pool_server(hi as u32), 123));
                }
            }
            // Occasional internal-internal and inbound flows exercise R1.
            if hosts.len() > 1 && rng.random_bool(p.internal_chat_prob) {
                let peer = hosts[(hi + 1) % hosts.len()];
                let t = w_start + rng.random_range(0..tw_us / 2);
                if t < duration_us {
                    let req = random_payload(180, rng);
                    let resp = random_payload(300, rng);
                    emit_flow(
                        sink,
                        t,
                        &FlowShape {
                            src: host,
                            sport: next_sport(&mut sport),
                            dst: peer,
                            dport: 8080,
                            req: &req,
                            resp: &resp,
                            chunk: p.chunk_bytes,
                            spacing_us: 50_000,
                            pad_pkts: 0,
                        },
                    );
                }
            }
            if rng.random_bool(p.inbound_prob) {
                let t = w_start + rng.random_range(0..tw_us / 2);
                if t < duration_us {
                    let req = random_payload(220, rng);
                    let resp = random_payload(400, rng);
                    emit_flow(
                        sink,
                        t,
                        &FlowShape {
                            src: pool_server(97),
                            sport: next_sport(&mut sport),
                            dst: host,
                            dport: 22,
                            req: &req,
                            resp: &resp,
                            chunk: p.chunk_bytes,
                            spacing_us: 50_000,
                            pad_pkts: 0,
                        },
                    );
                }
            }

            // ARP/DHCP-class noise that dispatch must drop.
            if rng.random_bool(0.1) {
                let t = w_start + rng.random_range(0..tw_us);
                if t < duration_us {
                    sink.push(plain_event(t, "other", host, 68, Ipv4Addr::new(255, 255, 255, 255), 67));
                }
            }
        }
    }
}

/// Two (or more) normal hosts that fetch the whitelisted service with shared
/// request shapes every window. With the whitelist rule disabled their flows
/// cluster like a cohort; with it enabled the flows never reach clustering.
fn generate_sync_traffic(
    sink: &mut EventSink,
    sync_hosts: &[Ipv4Addr],
    n_windows: u64,
    tw_us: u64,
    seed: u64,
) {
    if sync_hosts.len() < 2 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x53594e43);
    let templates: Vec<(Vec<u8>, Vec<u8>)> = (0..2)
        .map(|_| (random_payload(420, &mut rng), random_payload(700, &mut rng)))
        .collect();
    for w in 0..n_windows {
        let w_start = w * tw_us;
        for (ti, (req_tmpl, resp_tmpl)) in templates.iter().enumerate() {
            for (hi, &host) in sync_hosts.iter().enumerate() {
                let t0 = w_start
                    + (300 + 420 * ti as u64) * MICROS_PER_SEC
                    + hi as u64 * 200_000;
                let req = noisy_payload(req_tmpl, 0.02, &mut rng);
                let resp = noisy_payload(resp_tmpl, 0.02, &mut rng);
                emit_flow(
                    sink,
                    t0,
                    &FlowShape {
                        src: host,
                        sport: 2000 + (w % 250) as u16 * 2 + ti as u16,
                        dst: WHITELISTED_SERVICE,
                        dport: 443,
                        req: &req,
                        resp: &resp,
                        chunk: 1400,
                        spacing_us: 80_000,
                        pad_pkts: 0,
                    },
                );
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn generate_cohort_traffic(
    sink: &mut EventSink,
    cohort: &BotCohortSpec,
    cohort_idx: usize,
    members: &[Ipv4Addr],
    n_windows: u64,
    tw_us: u64,
    duration_us: u64,
    seed: u64,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb07 ^ (cohort_idx as u64) << 32);
    let cc = cc_server(cohort_idx);
    let req_tmpl = random_payload(cohort.payload_len, &mut rng);
    let resp_tmpl = random_payload(cohort.payload_len, &mut rng);
    let onset_us = cohort.onset_window * tw_us;
    if onset_us >= duration_us {
        return;
    }

    // Each bot resolves the C&C name once at onset.
    for (bi, &bot) in members.iter().enumerate() {
        let t = onset_us + 1_000 + bi as u64 * 3_000;
        dns_pair(sink, t, bot, &format!("cc{cohort_idx}.example.com"), cc);
    }

    match cohort.protocol_style {
        ProtocolStyle::IrcPersistent => {
            let period_us = cohort.cc_period_secs * MICROS_PER_SEC;
            for (bi, &bot) in members.iter().enumerate() {
                let sport = 3200 + bi as u16;
                let start = onset_us + 120 * MICROS_PER_SEC + bi as u64 * 500_000;
                sink.push(tcp_event(start, bot, sport, cc, 6667, "S", &[]));
                sink.push(tcp_event(start + 2_000, cc, 6667, bot, sport, "SA", &[]));
                let mut t = start + 4_000;
                while t < duration_us {
                    let req = noisy_payload(&req_tmpl, cohort.payload_noise, &mut rng);
                    let resp = noisy_payload(&resp_tmpl, cohort.payload_noise, &mut rng);
                    sink.push(tcp_event(t, bot, sport, cc, 6667, "A", &req));
                    sink.push(tcp_event(t + 100_000, cc, 6667, bot, sport, "A", &resp));
                    t += period_us;
                }
            }
        }
        ProtocolStyle::HttpPeriodic | ProtocolStyle::HttpJittered => {
            for (bi, &bot) in members.iter().enumerate() {
                let mut t = onset_us + 30 * MICROS_PER_SEC + bi as u64 * 700_000;
                let mut poll = 0u64;
                while t < duration_us {
                    let req = noisy_payload(&req_tmpl, cohort.payload_noise, &mut rng);
                    let resp = noisy_payload(&resp_tmpl, cohort.payload_noise, &mut rng);
                    emit_flow(
                        sink,
                        t,
                        &FlowShape {
                            src: bot,
                            sport: 3300 + ((poll * members.len() as u64 + bi as u64) % 60_000) as u16,
                            dst: cc,
                            dport: 80,
                            req: &req,
                            resp: &resp,
                            chunk: 1400,
                            spacing_us: 250_000,
                            pad_pkts: 0,
                        },
                    );
                    poll += 1;
                    t += match cohort.protocol_style {
                        ProtocolStyle::HttpPeriodic => cohort.cc_period_secs * MICROS_PER_SEC,
                        _ => rng.random_range(1..=cohort.cc_jitter_secs) * MICROS_PER_SEC,
                    };
                }
            }
        }
    }

    if cohort.scan_every_windows > 0 {
        for w in cohort.onset_window..n_windows {
            if (w - cohort.onset_window) % cohort.scan_every_windows != 0 {
                continue;
            }
            let w_start = w * tw_us;
            for (bi, &bot) in members.iter().enumerate() {
                for (si, style) in cohort.scan_styles.iter().enumerate() {
                    let burst_start =
                        w_start + (60 + bi as u64 * 11 + si as u64 * 15) * MICROS_PER_SEC;
                    if burst_start >= duration_us {
                        continue;
                    }
                    emit_scan_burst(sink, *style, bot, bi as u32, burst_start);
                }
            }
        }
    }
}

fn emit_scan_burst(sink: &mut EventSink, style: ScanStyle, bot: Ipv4Addr, bot_idx: u32, start: u64) {
    const PROBES: u32 = 20;
    let spacing = 400_000;
    match style {
        ScanStyle::TcpPortscan | ScanStyle::UdpPortscan => {
            let proto = if style == ScanStyle::TcpPortscan { "tcp" } else { "udp" };
            let target = scan_target(200 + bot_idx);
            for p in 0..PROBES {
                let mut ev =
                    plain_event(start + p as u64 * spacing, proto, bot, 4400, target, 1 + p as u16);
                if style == ScanStyle::TcpPortscan {
                    ev.flags = Some("S".to_string());
                }
                sink.push(ev);
            }
        }
        ScanStyle::TcpPortsweep | ScanStyle::UdpPortsweep => {
            let proto = if style == ScanStyle::TcpPortsweep { "tcp" } else { "udp" };
            for p in 0..PROBES {
                let mut ev = plain_event(
                    start + p as u64 * spacing,
                    proto,
                    bot,
                    4401,
                    scan_target(p),
                    445,
                );
                if style == ScanStyle::TcpPortsweep {
                    ev.flags = Some("S".to_string());
                }
                sink.push(ev);
            }
        }
        ScanStyle::IcmpSweep => {
            for p in 0..PROBES {
                sink.push(plain_event(start + p as u64 * spacing, "icmp", bot, 0, scan_target(100 + p), 0));
            }
        }
    }
}
