//! Pre-clustering filters that discard useless netflows and alerts. These
//! are efficiency filters only; they must never remove coordinated bot
//! traffic.

use crate::ingest::DomainIpMap;
use crate::model::{Config, Netflow, ScanAlert};

/// Applies the four netflow filtering rules in order:
/// R1 drops internal-internal flows and flows initiated from external hosts,
/// R2 drops flows carrying no payload in either direction,
/// R3 drops flows transferring more than `bulky_thr_bytes`,
/// R4 (toggleable via `Config::whitelist_rule`) drops flows to destinations
/// that DNS evidence maps to a whitelisted domain.
pub fn filter_netflows(flows: Vec<Netflow>, map: &DomainIpMap, cfg: &Config) -> Vec<Netflow> {
    flows
        .into_iter()
        .filter(|f| {
            let src_internal = cfg.is_internal(f.src.addr());
            let dst_internal = cfg.is_internal(f.dst_ip);
            if !src_internal || dst_internal {
                return false; // R1
            }
            if f.total_bytes() == 0 {
                return false; // R2
            }
            if f.total_bytes() > cfg.bulky_thr_bytes {
                return false; // R3
            }
            if cfg.whitelist_rule && map.is_whitelisted(f.dst_ip, &cfg.whitelist_domains) {
                return false; // R4
            }
            true
        })
        .collect()
}

/// Retains only alerts attributed to internal hosts.
pub fn filter_alerts(alerts: Vec<ScanAlert>, cfg: &Config) -> Vec<ScanAlert> {
    alerts.into_iter().filter(|a| cfg.is_internal(a.host.addr())).collect()
}
