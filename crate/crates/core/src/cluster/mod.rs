//! Two-level netflow clustering (flow-vector x-means, then payload-distance
//! hierarchy) and scan-type alert clustering.

pub mod hier;
pub mod ncd;
pub mod xmeans;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{Cluster, ClusterKind, Config, FlowVector, Netflow, ScanAlert, ScanType};

pub use ncd::{compressed_len, ncd, payload_distance, payload_weights, DistanceMatrix};
pub use xmeans::{bic, xmeans};

/// Extracts the 8-feature vector of a netflow. Per-second rates use the
/// flow's duration floored at 1 s.
pub fn flow_vector(f: &Netflow) -> FlowVector {
    let dur = f.duration_secs();
    let ratio = |num: u64, den: u64| if den > 0 { num as f64 / den as f64 } else { 0.0 };
    FlowVector {
        sent_pkts: f.sent_pkts as f64,
        sent_bytes: f.sent_bytes as f64,
        bytes_per_sent_pkt: ratio(f.sent_bytes, f.sent_pkts),
        sent_bytes_per_sec: f.sent_bytes as f64 / dur,
        recv_pkts: f.recv_pkts as f64,
        recv_bytes: f.recv_bytes as f64,
        bytes_per_recv_pkt: ratio(f.recv_bytes, f.recv_pkts),
        recv_bytes_per_sec: f.recv_bytes as f64 / dur,
    }
}

/// Per-feature z-score over the window's vectors. Features with zero
/// variance map to 0, so a lone vector normalizes to the origin.
pub fn normalize(vectors: &[FlowVector]) -> Vec<Vec<f64>> {
    if vectors.is_empty() {
        return Vec::new();
    }
    let rows: Vec<[f64; 8]> = vectors.iter().map(FlowVector::as_array).collect();
    let n = rows.len() as f64;
    let mut means = [0.0; 8];
    for row in &rows {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= n;
    }
    let mut stds = [0.0; 8];
    for row in &rows {
        for ((s, v), m) in stds.iter_mut().zip(row).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    for s in &mut stds {
        *s = (*s / n).sqrt();
    }
    rows.iter()
        .map(|row| {
            row.iter()
                .zip(&means)
                .zip(&stds)
                .map(|((v, m), s)| if *s > 0.0 { (v - m) / s } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Second-level clustering: average-linkage hierarchy over the pairwise
/// payload distance matrix, cut at `dist_thr`. Returns index groups into
/// `flows`; a single flow comes back as one singleton group.
pub fn hier_cluster(flows: &[&Netflow], dist_thr: f64) -> Vec<Vec<usize>> {
    let matrix = DistanceMatrix::payload_distances(flows);
    hier::cut_at(&matrix, dist_thr)
}

/// Two-level netflow clustering for one window. X-means partitions the
/// normalized flow vectors; each first-level cluster is re-split by payload
/// distance; every second-level group with at least two members becomes a
/// cluster whose hosts are the member flows' source hosts.
pub fn cluster_netflows(
    flows: &[Netflow],
    cfg: &Config,
    window: u64,
    next_cluster_id: &mut u64,
) -> Vec<Cluster> {
    if flows.len() < 2 {
        return Vec::new();
    }
    let vectors: Vec<FlowVector> = flows.iter().map(flow_vector).collect();
    let points = normalize(&vectors);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ splitmix64(window));
    let first_level = xmeans(&points, cfg.xmeans_kmax, &mut rng);

    let mut clusters = Vec::new();
    for group in first_level {
        if group.len() < 2 {
            continue;
        }
        let members: Vec<&Netflow> = group.iter().map(|&i| &flows[i]).collect();
        for second in hier_cluster(&members, cfg.dist_thr) {
            if second.len() < 2 {
                continue;
            }
            let cluster_id = *next_cluster_id;
            *next_cluster_id += 1;
            clusters.push(Cluster {
                cluster_id,
                window,
                kind: ClusterKind::Netflow,
                hosts: second.iter().map(|&i| members[i].src).collect(),
                members: second.iter().map(|&i| members[i].flow_id).collect(),
            });
        }
    }
    clusters
}

/// Alert clustering: one cluster per scan type present in the window.
pub fn cluster_alerts(
    alerts: &[ScanAlert],
    window: u64,
    next_cluster_id: &mut u64,
) -> Vec<Cluster> {
    let mut by_type: BTreeMap<ScanType, Vec<&ScanAlert>> = BTreeMap::new();
    for alert in alerts {
        by_type.entry(alert.scan_type).or_default().push(alert);
    }
    by_type
        .into_values()
        .map(|group| {
            let cluster_id = *next_cluster_id;
            *next_cluster_id += 1;
            Cluster {
                cluster_id,
                window,
                kind: ClusterKind::Scan,
                hosts: group.iter().map(|a| a.host).collect(),
                members: group.iter().map(|a| a.alert_id).collect(),
            }
        })
        .collect()
}

/// Mixes a window index into a decorrelated per-window seed offset.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
