//! Shared domain types, configuration, and time-window arithmetic.

use std::collections::BTreeSet;
use std::fmt;
use std::net::Ipv4Addr;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const MICROS_PER_SEC: u64 = 1_000_000;

// ── Identifiers ──────────────────────────────────────────────────────────────

/// An internal host, identified by its IPv4 address.
///
/// Internality (membership in `Config::internal_prefixes`) is established by
/// the filter stage; records that survive filtering reference internal hosts
/// only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HostId(pub Ipv4Addr);

impl HostId {
    pub fn addr(&self) -> Ipv4Addr {
        self.0
    }
}

impl fmt::Display for HostId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<Ipv4Addr> for HostId {
    fn from(addr: Ipv4Addr) -> Self {
        HostId(addr)
    }
}

// ── Packet events ────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Tcp,
    Udp,
    Icmp,
    Dns,
    Other,
}

impl Protocol {
    pub const ALL: [Protocol; 5] = [
        Protocol::Tcp,
        Protocol::Udp,
        Protocol::Icmp,
        Protocol::Dns,
        Protocol::Other,
    ];
}

/// TCP flag subset carried by trace events, rendered as a subset of "SFRA".
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TcpFlags {
    pub syn: bool,
    pub fin: bool,
    pub rst: bool,
    pub ack: bool,
}

impl TcpFlags {
    pub const SYN: TcpFlags = TcpFlags { syn: true, fin: false, rst: false, ack: false };

    pub fn terminates(&self) -> bool {
        self.fin || self.rst
    }
}

impl FromStr for TcpFlags {
    type Err = char;

    /// Parses a subset of "SFRA"; any other character is rejected.
    fn from_str(s: &str) -> Result<Self, char> {
        let mut flags = TcpFlags::default();
        for c in s.chars() {
            match c {
                'S' => flags.syn = true,
                'F' => flags.fin = true,
                'R' => flags.rst = true,
                'A' => flags.ack = true,
                other => return Err(other),
            }
        }
        Ok(flags)
    }
}

impl fmt::Display for TcpFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (set, c) in [(self.syn, 'S'), (self.fin, 'F'), (self.rst, 'R'), (self.ack, 'A')] {
            if set {
                write!(f, "{c}")?;
            }
        }
        Ok(())
    }
}

/// Pre-parsed DNS fields attached to `Protocol::Dns` events.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnsInfo {
    pub qname: String,
    pub answers: Vec<Ipv4Addr>,
    pub is_response: bool,
}

/// One timestamped packet observation; the ingest unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketEvent {
    /// Microseconds since the trace origin.
    pub ts: u64,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: Protocol,
    pub payload: Vec<u8>,
    pub tcp_flags: Option<TcpFlags>,
    pub dns: Option<DnsInfo>,
}

// ── Netflows ─────────────────────────────────────────────────────────────────

/// Aggregated bidirectional TCP flow; the clustering unit.
///
/// `sent_*` counters describe initiator→responder traffic, `recv_*` the
/// reverse. Byte counters cover payload bytes only; the retained payload
/// strings are capped at `Config::payload_cap` per direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Netflow {
    pub flow_id: u64,
    pub window: u64,
    pub start_ts: u64,
    pub end_ts: u64,
    pub src: HostId,
    pub src_port: u16,
    pub dst_ip: Ipv4Addr,
    pub dst_port: u16,
    pub sent_pkts: u64,
    pub recv_pkts: u64,
    pub sent_bytes: u64,
    pub recv_bytes: u64,
    #[serde(with = "b64")]
    pub sent_payload: Vec<u8>,
    #[serde(with = "b64")]
    pub recv_payload: Vec<u8>,
    /// True when this record is one piece of a flow split at a window
    /// boundary.
    pub partial: bool,
}

impl Netflow {
    pub fn total_bytes(&self) -> u64 {
        self.sent_bytes + self.recv_bytes
    }

    /// Flow duration in seconds, floored at 1 s so per-second rates stay
    /// finite for single-packet flows.
    pub fn duration_secs(&self) -> f64 {
        let us = self.end_ts.saturating_sub(self.start_ts);
        ((us as f64) / MICROS_PER_SEC as f64).max(1.0)
    }
}

/// The 8 per-flow features used by first-level clustering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowVector {
    pub sent_pkts: f64,
    pub sent_bytes: f64,
    pub bytes_per_sent_pkt: f64,
    pub sent_bytes_per_sec: f64,
    pub recv_pkts: f64,
    pub recv_bytes: f64,
    pub bytes_per_recv_pkt: f64,
    pub recv_bytes_per_sec: f64,
}

impl FlowVector {
    pub fn as_array(&self) -> [f64; 8] {
        [
            self.sent_pkts,
            self.sent_bytes,
            self.bytes_per_sent_pkt,
            self.sent_bytes_per_sec,
            self.recv_pkts,
            self.recv_bytes,
            self.bytes_per_recv_pkt,
            self.recv_bytes_per_sec,
        ]
    }
}

// ── Alerts ───────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanType {
    TcpPortscan,
    TcpPortsweep,
    UdpPortscan,
    UdpPortsweep,
    IcmpSweep,
}

/// A detected scanning activity attributed to an internal host.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanAlert {
    pub alert_id: u64,
    pub window: u64,
    pub host: HostId,
    pub scan_type: ScanType,
    pub scanned_port: Option<u16>,
    pub scanned_prefix: Option<String>,
    pub ts: u64,
}

// ── Clusters and scores ──────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterKind {
    Netflow,
    Scan,
}

/// A set of internal hosts grouped within one time window; the correlation
/// unit. `hosts` is exactly the set of source hosts of `members`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub cluster_id: u64,
    pub window: u64,
    pub kind: ClusterKind,
    pub hosts: BTreeSet<HostId>,
    pub members: BTreeSet<u64>,
}

impl Cluster {
    pub fn contains(&self, host: HostId) -> bool {
        self.hosts.contains(&host)
    }
}

/// Per-host cumulative score plus the last window in which the host was
/// correlated. Scores are clamped at 0 from below.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HostScoreState {
    pub host: HostId,
    pub score: f64,
    pub last_correlated_tw: Option<u64>,
}

impl HostScoreState {
    pub fn new(host: HostId) -> Self {
        HostScoreState { host, score: 0.0, last_correlated_tw: None }
    }
}

// ── IPv4 prefixes ────────────────────────────────────────────────────────────

/// An IPv4 network prefix in CIDR notation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ipv4Prefix {
    addr: Ipv4Addr,
    len: u8,
}

impl Ipv4Prefix {
    pub fn new(addr: Ipv4Addr, len: u8) -> Result<Self, ConfigError> {
        if len > 32 {
            return Err(ConfigError::InvalidPrefix(format!("{addr}/{len}")));
        }
        Ok(Ipv4Prefix { addr, len })
    }

    fn mask(&self) -> u32 {
        if self.len == 0 {
            0
        } else {
            u32::MAX << (32 - self.len)
        }
    }

    pub fn contains(&self, ip: Ipv4Addr) -> bool {
        let m = self.mask();
        u32::from(ip) & m == u32::from(self.addr) & m
    }
}

impl FromStr for Ipv4Prefix {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        let bad = || ConfigError::InvalidPrefix(s.to_string());
        match s.split_once('/') {
            Some((ip, len)) => {
                let addr: Ipv4Addr = ip.parse().map_err(|_| bad())?;
                let len: u8 = len.parse().map_err(|_| bad())?;
                Ipv4Prefix::new(addr, len)
            }
            None => {
                let addr: Ipv4Addr = s.parse().map_err(|_| bad())?;
                Ipv4Prefix::new(addr, 32)
            }
        }
    }
}

impl fmt::Display for Ipv4Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.addr, self.len)
    }
}

impl Serialize for Ipv4Prefix {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Ipv4Prefix {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

// ── Configuration ────────────────────────────────────────────────────────────

/// Run configuration. Field names double as keys of the flat key-value
/// config file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    /// Time-window size in seconds.
    pub tw_size_secs: u64,
    /// How many previous windows the correlation engine looks back over.
    pub max_num_tw: u64,
    /// Cluster-correlation threshold.
    pub corr_thr: f64,
    /// Cumulative score above which a host is reported as a bot.
    pub bot_thr: f64,
    /// Per-window score cap.
    pub max_tw_score: f64,
    /// Flows transferring more than this many payload bytes are dropped.
    pub bulky_thr_bytes: u64,
    /// Cut height for second-level (payload) clustering.
    pub dist_thr: f64,
    /// Subnets considered internal to the monitored network.
    pub internal_prefixes: Vec<Ipv4Prefix>,
    /// Known-good domains; suffix-matched against DNS-observed names.
    pub whitelist_domains: Vec<String>,
    /// Whether the whitelist filtering rule is applied.
    pub whitelist_rule: bool,
    /// Retained payload bytes per direction per flow.
    pub payload_cap: usize,
    /// Distinct ports on one destination within the scan window that
    /// constitute a portscan.
    pub scan_ports_thr: usize,
    /// Distinct destinations on one port within the scan window that
    /// constitute a portsweep (also the ICMP sweep threshold).
    pub scan_hosts_thr: usize,
    /// Sliding interval used by the scan detector, in seconds.
    pub scan_window_secs: u64,
    /// Idle time after which an unterminated flow is closed, in seconds.
    pub idle_timeout_secs: u64,
    /// Upper bound on the number of first-level clusters per window.
    pub xmeans_kmax: usize,
    /// PRNG seed for clustering initialization.
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            tw_size_secs: 20 * 60,
            max_num_tw: 3,
            corr_thr: 0.65,
            bot_thr: 33.0,
            max_tw_score: 5.0,
            bulky_thr_bytes: 1 << 20,
            dist_thr: 0.35,
            internal_prefixes: vec![
                "10.0.0.0/8".parse().unwrap(),
                "172.16.0.0/12".parse().unwrap(),
                "192.168.0.0/16".parse().unwrap(),
            ],
            whitelist_domains: Vec::new(),
            whitelist_rule: true,
            payload_cap: 2048,
            scan_ports_thr: 15,
            scan_hosts_thr: 15,
            scan_window_secs: 60,
            idle_timeout_secs: 5 * 60,
            xmeans_kmax: 16,
            seed: 42,
        }
    }
}

impl Config {
    pub fn tw_size_us(&self) -> u64 {
        self.tw_size_secs * MICROS_PER_SEC
    }

    pub fn idle_timeout_us(&self) -> u64 {
        self.idle_timeout_secs * MICROS_PER_SEC
    }

    pub fn scan_window_us(&self) -> u64 {
        self.scan_window_secs * MICROS_PER_SEC
    }

    pub fn is_internal(&self, ip: Ipv4Addr) -> bool {
        self.internal_prefixes.iter().any(|p| p.contains(ip))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn positive(name: &str, ok: bool) -> Result<(), ConfigError> {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::InvalidValue { key: name.to_string(), reason: "must be strictly positive".to_string() })
            }
        }
        positive("tw_size_secs", self.tw_size_secs > 0)?;
        positive("max_num_tw", self.max_num_tw > 0)?;
        positive("bot_thr", self.bot_thr > 0.0)?;
        positive("max_tw_score", self.max_tw_score > 0.0)?;
        positive("bulky_thr_bytes", self.bulky_thr_bytes > 0)?;
        positive("payload_cap", self.payload_cap > 0)?;
        positive("scan_ports_thr", self.scan_ports_thr > 0)?;
        positive("scan_hosts_thr", self.scan_hosts_thr > 0)?;
        positive("scan_window_secs", self.scan_window_secs > 0)?;
        positive("idle_timeout_secs", self.idle_timeout_secs > 0)?;
        positive("xmeans_kmax", self.xmeans_kmax > 0)?;
        if !(self.corr_thr > 0.0 && self.corr_thr < 1.0) {
            return Err(ConfigError::InvalidValue {
                key: "corr_thr".to_string(),
                reason: "must lie in (0, 1)".to_string(),
            });
        }
        if !(self.dist_thr > 0.0 && self.dist_thr <= 1.0) {
            return Err(ConfigError::InvalidValue {
                key: "dist_thr".to_string(),
                reason: "must lie in (0, 1]".to_string(),
            });
        }
        if self.internal_prefixes.is_empty() {
            return Err(ConfigError::InvalidValue {
                key: "internal_prefixes".to_string(),
                reason: "at least one internal prefix is required".to_string(),
            });
        }
        Ok(())
    }

    /// Renders the config as `key = value` lines. `Config::from_file_str`
    /// parses this format back losslessly.
    pub fn to_file_string(&self) -> String {
        let prefixes: Vec<String> = self.internal_prefixes.iter().map(|p| p.to_string()).collect();
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("tw_size_secs", self.tw_size_secs.to_string());
        kv("max_num_tw", self.max_num_tw.to_string());
        kv("corr_thr", self.corr_thr.to_string());
        kv("bot_thr", self.bot_thr.to_string());
        kv("max_tw_score", self.max_tw_score.to_string());
        kv("bulky_thr_bytes", self.bulky_thr_bytes.to_string());
        kv("dist_thr", self.dist_thr.to_string());
        kv("internal_prefixes", prefixes.join(","));
        kv("whitelist_domains", self.whitelist_domains.join(","));
        kv("whitelist_rule", self.whitelist_rule.to_string());
        kv("payload_cap", self.payload_cap.to_string());
        kv("scan_ports_thr", self.scan_ports_thr.to_string());
        kv("scan_hosts_thr", self.scan_hosts_thr.to_string());
        kv("scan_window_secs", self.scan_window_secs.to_string());
        kv("idle_timeout_secs", self.idle_timeout_secs.to_string());
        kv("xmeans_kmax", self.xmeans_kmax.to_string());
        kv("seed", self.seed.to_string());
        out
    }

    /// Parses the flat `key = value` format. Unknown keys are rejected;
    /// keys not present keep their default values. `#` starts a comment.
    pub fn from_file_str(text: &str) -> Result<Config, ConfigError> {
        let mut cfg = Config::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Malformed { line: idx + 1, text: raw.to_string() })?;
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one field from its textual key/value form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
            value.parse().map_err(|_| ConfigError::InvalidValue {
                key: key.to_string(),
                reason: format!("cannot parse {value:?}"),
            })
        }
        fn split_list(value: &str) -> impl Iterator<Item = &str> {
            value.split(',').map(str::trim).filter(|s| !s.is_empty())
        }
        match key {
            "tw_size_secs" => self.tw_size_secs = parse(key, value)?,
            "max_num_tw" => self.max_num_tw = parse(key, value)?,
            "corr_thr" => self.corr_thr = parse(key, value)?,
            "bot_thr" => self.bot_thr = parse(key, value)?,
            "max_tw_score" => self.max_tw_score = parse(key, value)?,
            "bulky_thr_bytes" => self.bulky_thr_bytes = parse(key, value)?,
            "dist_thr" => self.dist_thr = parse(key, value)?,
            "internal_prefixes" => {
                self.internal_prefixes =
                    split_list(value).map(Ipv4Prefix::from_str).collect::<Result<_, _>>()?;
            }
            "whitelist_domains" => {
                self.whitelist_domains = split_list(value).map(str::to_string).collect();
            }
            "whitelist_rule" => self.whitelist_rule = parse(key, value)?,
            "payload_cap" => self.payload_cap = parse(key, value)?,
            "scan_ports_thr" => self.scan_ports_thr = parse(key, value)?,
            "scan_hosts_thr" => self.scan_hosts_thr = parse(key, value)?,
            "scan_window_secs" => self.scan_window_secs = parse(key, value)?,
            "idle_timeout_secs" => self.idle_timeout_secs = parse(key, value)?,
            "xmeans_kmax" => self.xmeans_kmax = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Config::from_file_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        std::fs::write(path, self.to_file_string())
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line} is not `key = value`: {text:?}")]
    Malformed { line: usize, text: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid value for {key}: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("invalid IPv4 prefix {0:?}")]
    InvalidPrefix(String),
    #[error("config io error: {0}")]
    Io(String),
}

// ── Time windows ─────────────────────────────────────────────────────────────

#[derive(Debug, Error, PartialEq, Eq)]
#[error("timestamp {ts} precedes the window epoch {epoch}")]
pub struct TimestampBeforeEpoch {
    pub ts: u64,
    pub epoch: u64,
}

/// Maps a timestamp to its window index. Windows are the half-open intervals
/// `[epoch + k*tw_size, epoch + (k+1)*tw_size)`.
pub fn window_index(ts: u64, epoch: u64, tw_size_us: u64) -> Result<u64, TimestampBeforeEpoch> {
    debug_assert!(tw_size_us > 0);
    if ts < epoch {
        return Err(TimestampBeforeEpoch { ts, epoch });
    }
    Ok((ts - epoch) / tw_size_us)
}

/// Base64 (de)serialization for payload byte strings in JSONL dumps.
pub mod b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(de)?;
        STANDARD.decode(s.as_bytes()).map_err(serde::de::Error::custom)
    }
}
