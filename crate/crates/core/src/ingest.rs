//! Trace parsing, protocol-based event routing, and the passive DNS map
//! behind whitelist filtering.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Lines};
use std::net::Ipv4Addr;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DnsInfo, PacketEvent, Protocol, TcpFlags, MICROS_PER_SEC};

/// How far a timestamp may regress behind the latest one seen before the
/// stream is rejected as out of order.
pub const REORDER_TOLERANCE_US: u64 = MICROS_PER_SEC;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot open trace {path}: {source}")]
    Open {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("io error reading trace: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("trace line {line}: timestamp {ts} regresses more than 1s behind {max_seen}")]
    TimestampRegression { line: usize, ts: u64, max_seen: u64 },
}

/// Wire format of one trace line.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawEvent {
    pub ts_us: u64,
    pub proto: String,
    pub src_ip: String,
    pub dst_ip: String,
    pub src_port: u16,
    pub dst_port: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flags: Option<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub payload_b64: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qname: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answers: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_response: Option<bool>,
}

impl RawEvent {
    fn into_event(self, line: usize) -> Result<PacketEvent, IngestError> {
        let err = |reason: String| IngestError::Parse { line, reason };
        let protocol = match self.proto.as_str() {
            "tcp" => Protocol::Tcp,
            "udp" => Protocol::Udp,
            "icmp" => Protocol::Icmp,
            "dns" => Protocol::Dns,
            "other" => Protocol::Other,
            other => return Err(err(format!("unknown proto {other:?}"))),
        };
        let src_ip: Ipv4Addr =
            self.src_ip.parse().map_err(|_| err(format!("bad src_ip {:?}", self.src_ip)))?;
        let dst_ip: Ipv4Addr =
            self.dst_ip.parse().map_err(|_| err(format!("bad dst_ip {:?}", self.dst_ip)))?;
        let tcp_flags = match (&protocol, self.flags.as_deref()) {
            (Protocol::Tcp, Some(s)) => Some(
                s.parse::<TcpFlags>()
                    .map_err(|c| err(format!("flag character {c:?} not in \"SFRA\"")))?,
            ),
            (Protocol::Tcp, None) => Some(TcpFlags::default()),
            _ => None,
        };
        let payload = BASE64
            .decode(self.payload_b64.as_bytes())
            .map_err(|e| err(format!("bad payload_b64: {e}")))?;
        let dns = if protocol == Protocol::Dns {
            let qname = self.qname.ok_or_else(|| err("dns event without qname".to_string()))?;
            let is_response =
                self.is_response.ok_or_else(|| err("dns event without is_response".to_string()))?;
            let answers = self
                .answers
                .unwrap_or_default()
                .iter()
                .map(|a| a.parse::<Ipv4Addr>().map_err(|_| err(format!("bad answer ip {a:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            Some(DnsInfo { qname, answers, is_response })
        } else {
            None
        };
        Ok(PacketEvent {
            ts: self.ts_us,
            src_ip,
            dst_ip,
            src_port: self.src_port,
            dst_port: self.dst_port,
            protocol,
            payload,
            tcp_flags,
            dns,
        })
    }
}

/// Streaming reader over a JSONL trace file; yields events in file order and
/// validates field ranges plus timestamp monotonicity (1 s reordering
/// tolerance).
pub struct TraceReader {
    lines: Lines<BufReader<File>>,
    line_no: usize,
    max_ts_seen: u64,
}

impl TraceReader {
    pub fn open(path: &Path) -> Result<Self, IngestError> {
        let file = File::open(path)
            .map_err(|source| IngestError::Open { path: path.display().to_string(), source })?;
        Ok(TraceReader { lines: BufReader::new(file).lines(), line_no: 0, max_ts_seen: 0 })
    }
}

impl Iterator for TraceReader {
    type Item = Result<PacketEvent, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let raw = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if raw.trim().is_empty() {
                continue;
            }
            return Some(self.parse_line(&raw));
        }
    }
}

impl TraceReader {
    fn parse_line(&mut self, raw: &str) -> Result<PacketEvent, IngestError> {
        let line = self.line_no;
        let parsed: RawEvent = serde_json::from_str(raw)
            .map_err(|e| IngestError::Parse { line, reason: e.to_string() })?;
        let event = parsed.into_event(line)?;
        if event.ts + REORDER_TOLERANCE_US < self.max_ts_seen {
            return Err(IngestError::TimestampRegression {
                line,
                ts: event.ts,
                max_seen: self.max_ts_seen,
            });
        }
        self.max_ts_seen = self.max_ts_seen.max(event.ts);
        Ok(event)
    }
}

/// Opens a trace file as an ordered stream of events.
pub fn parse_trace(path: &Path) -> Result<TraceReader, IngestError> {
    TraceReader::open(path)
}

// ── Dispatching ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    DomainIpMapping,
    NetflowGenerating,
    AlertGenerating,
}

/// Routes an event to downstream consumers by protocol. DNS feeds the
/// domain-IP map, TCP feeds both netflow and alert generation, UDP/ICMP feed
/// alert generation only, and anything else is dropped.
pub fn dispatch(event: &PacketEvent) -> &'static [Route] {
    match event.protocol {
        Protocol::Dns => &[Route::DomainIpMapping],
        Protocol::Tcp => &[Route::NetflowGenerating, Route::AlertGenerating],
        Protocol::Udp | Protocol::Icmp => &[Route::AlertGenerating],
        Protocol::Other => &[],
    }
}

// ── Domain-IP mapping ────────────────────────────────────────────────────────

/// Passive record of which domain names resolved to which addresses, built
/// from observed DNS responses. Entries never expire within a run.
#[derive(Debug, Default, Clone)]
pub struct DomainIpMap {
    entries: HashMap<Ipv4Addr, HashMap<String, u64>>,
    unparseable: u64,
}

impl DomainIpMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records the (answer ip, queried domain) pairs of a DNS response.
    /// Query packets are a no-op; DNS events lacking parsed fields bump the
    /// unparseable counter.
    pub fn record_dns(&mut self, event: &PacketEvent) {
        if event.protocol != Protocol::Dns {
            return;
        }
        let Some(dns) = &event.dns else {
            self.unparseable += 1;
            return;
        };
        if !dns.is_response || dns.answers.is_empty() {
            return;
        }
        let qname = normalize_domain(&dns.qname);
        for ip in &dns.answers {
            self.entries.entry(*ip).or_default().insert(qname.clone(), event.ts);
        }
    }

    /// True iff some domain observed to map to `ip` suffix-matches a
    /// whitelist entry. Matching is label-aligned: `google.com` matches
    /// `www.google.com` but not `evil-google.com`.
    pub fn is_whitelisted(&self, ip: Ipv4Addr, whitelist_domains: &[String]) -> bool {
        let Some(domains) = self.entries.get(&ip) else {
            return false;
        };
        domains.keys().any(|d| {
            whitelist_domains.iter().any(|w| domain_suffix_match(d, &normalize_domain(w)))
        })
    }

    pub fn domains_for(&self, ip: Ipv4Addr) -> Option<&HashMap<String, u64>> {
        self.entries.get(&ip)
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(|d| d.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn unparseable(&self) -> u64 {
        self.unparseable
    }
}

fn normalize_domain(d: &str) -> String {
    d.trim_end_matches('.').to_ascii_lowercase()
}

fn domain_suffix_match(domain: &str, entry: &str) -> bool {
    domain == entry
        || (domain.len() > entry.len()
            && domain.ends_with(entry)
            && domain.as_bytes()[domain.len() - entry.len() - 1] == b'.')
}

/// Reads a newline-delimited whitelist file; `#` comments and blank lines
/// are skipped.
pub fn load_whitelist(path: &Path) -> Result<Vec<String>, IngestError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| IngestError::Open { path: path.display().to_string(), source })?;
    Ok(text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}
