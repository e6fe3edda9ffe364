//! Threshold-based scan detection over one window's packet events, emitting
//! alert records for internal hosts that probe many ports on one target or
//! one port across many targets within a sliding interval.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::net::Ipv4Addr;

use crate::model::{Config, HostId, PacketEvent, Protocol, ScanAlert, ScanType};

/// Scans one window's events and returns at most one alert per
/// (host, scan type). Only internal source hosts are considered; external
/// scanners never produce alerts.
pub fn detect(events: &[PacketEvent], window: u64, cfg: &Config, next_alert_id: &mut u64) -> Vec<ScanAlert> {
    let span_us = cfg.scan_window_us();
    // (host, scan_type) -> earliest trigger
    let mut hits: BTreeMap<(HostId, ScanType), Trigger> = BTreeMap::new();
    let mut track = |key: (HostId, ScanType), trig: Trigger| {
        hits.entry(key).or_insert(trig);
    };

    let mut portscan: HashMap<(Ipv4Addr, Protocol, Ipv4Addr), DistinctWindow<u16>> = HashMap::new();
    let mut portsweep: HashMap<(Ipv4Addr, Protocol, u16), DistinctWindow<Ipv4Addr>> = HashMap::new();
    let mut icmp_sweep: HashMap<Ipv4Addr, DistinctWindow<Ipv4Addr>> = HashMap::new();

    for ev in events {
        if !cfg.is_internal(ev.src_ip) || cfg.is_internal(ev.dst_ip) {
            continue;
        }
        let host = HostId(ev.src_ip);
        match ev.protocol {
            Protocol::Tcp | Protocol::Udp => {
                let scan_type = match ev.protocol {
                    Protocol::Tcp => ScanType::TcpPortscan,
                    _ => ScanType::UdpPortscan,
                };
                let w = portscan.entry((ev.src_ip, ev.protocol, ev.dst_ip)).or_default();
                if w.push(ev.ts, ev.dst_port, span_us) >= cfg.scan_ports_thr {
                    track(
                        (host, scan_type),
                        Trigger { ts: ev.ts, port: None, prefix: Some(format!("{}/32", ev.dst_ip)) },
                    );
                }

                let sweep_type = match ev.protocol {
                    Protocol::Tcp => ScanType::TcpPortsweep,
                    _ => ScanType::UdpPortsweep,
                };
                let w = portsweep.entry((ev.src_ip, ev.protocol, ev.dst_port)).or_default();
                if w.push(ev.ts, ev.dst_ip, span_us) >= cfg.scan_hosts_thr {
                    track(
                        (host, sweep_type),
                        Trigger { ts: ev.ts, port: Some(ev.dst_port), prefix: common_prefix24(w.items()) },
                    );
                }
            }
            Protocol::Icmp => {
                let w = icmp_sweep.entry(ev.src_ip).or_default();
                if w.push(ev.ts, ev.dst_ip, span_us) >= cfg.scan_hosts_thr {
                    track(
                        (host, ScanType::IcmpSweep),
                        Trigger { ts: ev.ts, port: None, prefix: common_prefix24(w.items()) },
                    );
                }
            }
            Protocol::Dns | Protocol::Other => {}
        }
    }

    hits.into_iter()
        .map(|((host, scan_type), trig)| {
            let alert_id = *next_alert_id;
            *next_alert_id += 1;
            ScanAlert {
                alert_id,
                window,
                host,
                scan_type,
                scanned_port: trig.port,
                scanned_prefix: trig.prefix,
                ts: trig.ts,
            }
        })
        .collect()
}

struct Trigger {
    ts: u64,
    port: Option<u16>,
    prefix: Option<String>,
}

/// Sliding count of distinct items over the last `span_us` microseconds.
struct DistinctWindow<T> {
    events: VecDeque<(u64, T)>,
    counts: HashMap<T, usize>,
}

impl<T: std::hash::Hash + Eq + Copy> Default for DistinctWindow<T> {
    fn default() -> Self {
        DistinctWindow { events: VecDeque::new(), counts: HashMap::new() }
    }
}

impl<T: std::hash::Hash + Eq + Copy> DistinctWindow<T> {
    /// Inserts an observation and returns the number of distinct items seen
    /// within the trailing interval ending at `ts`.
    fn push(&mut self, ts: u64, item: T, span_us: u64) -> usize {
        while let Some(&(t0, old)) = self.events.front() {
            if t0 + span_us <= ts {
                self.events.pop_front();
                if let Some(c) = self.counts.get_mut(&old) {
                    *c -= 1;
                    if *c == 0 {
                        self.counts.remove(&old);
                    }
                }
            } else {
                break;
            }
        }
        self.events.push_back((ts, item));
        *self.counts.entry(item).or_insert(0) += 1;
        self.counts.len()
    }

    fn items(&self) -> impl Iterator<Item = &T> {
        self.counts.keys()
    }
}

/// The shared /24 of the swept targets, when they all fall in one.
fn common_prefix24<'a>(ips: impl Iterator<Item = &'a Ipv4Addr>) -> Option<String> {
    let nets: HashSet<u32> = ips.map(|ip| u32::from(*ip) & 0xffff_ff00).collect();
    if nets.len() == 1 {
        let net = Ipv4Addr::from(*nets.iter().next().unwrap());
        Some(format!("{net}/24"))
    } else {
        None
    }
}
