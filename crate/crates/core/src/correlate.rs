//! Cross-window cluster correlation and per-host bot scoring.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::model::{Cluster, ClusterKind, Config, HostId, HostScoreState};

/// Correlation degree between two clusters from windows `i` and `j ≥ i`:
/// 1 − exp(−( |∩|/|∪| · |∩| · 1/((j−i)+1) )) over the host sets. Close to 1
/// for high overlap ratio, high overlap count, and small window distance;
/// exactly 0 for disjoint host sets.
pub fn cluster_correlation(ci: &Cluster, cj: &Cluster, i: u64, j: u64) -> f64 {
    debug_assert!(j >= i);
    let intersection = ci.hosts.intersection(&cj.hosts).count() as f64;
    if intersection == 0.0 {
        return 0.0;
    }
    let union = ci.hosts.union(&cj.hosts).count() as f64;
    let exponent = (intersection / union) * intersection / ((j - i) as f64 + 1.0);
    1.0 - (-exponent).exp()
}

/// Correlation score a host earns from comparing its clusters in the current
/// window `i` against its clusters in window `j ≤ i`. Every cluster that
/// participates in a pair correlating at or above `corr_thr` joins a set,
/// which then contributes 1 point per netflow cluster and 2 per scan
/// cluster, capped at `max_tw_score`. When `i == j`, identity pairs are
/// skipped so a cluster cannot correlate with itself.
pub fn tw_correlation(
    host: HostId,
    current: &[&Cluster],
    previous: &[&Cluster],
    i: u64,
    j: u64,
    cfg: &Config,
) -> f64 {
    debug_assert!(current.iter().chain(previous).all(|c| c.contains(host)));
    let mut correlated: BTreeMap<u64, ClusterKind> = BTreeMap::new();
    for ci in current {
        for cj in previous {
            if i == j && ci.cluster_id == cj.cluster_id {
                continue;
            }
            if cluster_correlation(cj, ci, j, i) >= cfg.corr_thr {
                correlated.insert(ci.cluster_id, ci.kind);
                correlated.insert(cj.cluster_id, cj.kind);
            }
        }
    }
    let raw: f64 = correlated
        .values()
        .map(|kind| match kind {
            ClusterKind::Netflow => 1.0,
            ClusterKind::Scan => 2.0,
        })
        .sum();
    raw.min(cfg.max_tw_score)
}

/// Ring of the cluster lists for the trailing `max_num_tw + 1` windows.
#[derive(Debug, Default)]
pub struct WindowStore {
    windows: BTreeMap<u64, Vec<Cluster>>,
}

impl WindowStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, window: u64, clusters: Vec<Cluster>) {
        self.windows.insert(window, clusters);
    }

    /// Drops windows older than `current − max_num_tw`.
    pub fn evict(&mut self, current: u64, max_num_tw: u64) {
        let keep_from = current.saturating_sub(max_num_tw);
        self.windows.retain(|&w, _| w >= keep_from);
    }

    pub fn clusters(&self, window: u64) -> &[Cluster] {
        self.windows.get(&window).map(Vec::as_slice).unwrap_or(&[])
    }

    /// The window's clusters containing `host`.
    pub fn host_clusters(&self, window: u64, host: HostId) -> Vec<&Cluster> {
        self.clusters(window).iter().filter(|c| c.contains(host)).collect()
    }

    /// Hosts present in any stored cluster of the given window.
    pub fn hosts_in(&self, window: u64) -> BTreeSet<HostId> {
        self.clusters(window).iter().flat_map(|c| c.hosts.iter().copied()).collect()
    }
}

/// Per-window score delta for one host: the maximum `tw_correlation` against
/// the current and the `max_num_tw` preceding windows when any is positive;
/// otherwise the negated distance to the host's last correlated window
/// (0 for hosts that have never correlated).
pub fn score(
    host: HostId,
    window: u64,
    store: &WindowStore,
    state: &HostScoreState,
    cfg: &Config,
) -> f64 {
    let current = store.host_clusters(window, host);
    let mut best = 0.0f64;
    if !current.is_empty() {
        for back in 0..=cfg.max_num_tw {
            let Some(j) = window.checked_sub(back) else { break };
            let previous = store.host_clusters(j, host);
            if previous.is_empty() {
                continue;
            }
            best = best.max(tw_correlation(host, &current, &previous, window, j, cfg));
        }
    }
    if best > 0.0 {
        best
    } else {
        match state.last_correlated_tw {
            Some(last) => -((window - last) as f64),
            None => 0.0,
        }
    }
}

/// One host's score row in a window report.
#[derive(Debug, Clone, Serialize)]
pub struct ScoreRow {
    pub window: u64,
    pub host: HostId,
    pub cumulative_score: f64,
    pub delta: f64,
    pub flagged: bool,
}

/// Score table over every host ever seen in a surviving cluster.
#[derive(Debug, Default)]
pub struct ScoreTable {
    states: BTreeMap<HostId, HostScoreState>,
}

impl ScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, host: HostId) -> Option<&HostScoreState> {
        self.states.get(&host)
    }

    pub fn iter(&self) -> impl Iterator<Item = &HostScoreState> {
        self.states.values()
    }
}

/// Commits one window: stores its clusters, applies the per-host score delta
/// to every host of record (hosts in the window's clusters plus hosts still
/// carrying positive score), clamps cumulative scores at 0, evicts the
/// expired window, and returns the rows plus the hosts whose cumulative
/// score now exceeds `bot_thr`.
pub fn update_and_report(
    window: u64,
    clusters: Vec<Cluster>,
    store: &mut WindowStore,
    table: &mut ScoreTable,
    cfg: &Config,
) -> (Vec<ScoreRow>, Vec<(HostId, f64)>) {
    store.insert(window, clusters);

    let mut hosts: BTreeSet<HostId> = store.hosts_in(window);
    hosts.extend(table.states.values().filter(|s| s.score > 0.0).map(|s| s.host));

    let mut rows = Vec::with_capacity(hosts.len());
    let mut flagged = Vec::new();
    for host in hosts {
        let state = table.states.entry(host).or_insert_with(|| HostScoreState::new(host));
        let delta = score(host, window, store, state, cfg);
        if delta > 0.0 {
            state.last_correlated_tw = Some(window);
        }
        state.score = (state.score + delta).max(0.0);
        let is_bot = state.score > cfg.bot_thr;
        rows.push(ScoreRow {
            window,
            host,
            cumulative_score: state.score,
            delta,
            flagged: is_bot,
        });
        if is_bot {
            flagged.push((host, state.score));
        }
    }
    store.evict(window, cfg.max_num_tw);
    (rows, flagged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ClusterKind;

    fn host(n: u8) -> HostId {
        HostId(format!("10.0.0.{n}").parse().unwrap())
    }

    fn cluster(id: u64, window: u64, kind: ClusterKind, hosts: &[u8]) -> Cluster {
        Cluster {
            cluster_id: id,
            window,
            kind,
            hosts: hosts.iter().map(|&h| host(h)).collect(),
            members: hosts.iter().map(|&h| h as u64).collect(),
        }
    }

    #[test]
    fn identical_host_sets_in_same_window() {
        let a = cluster(1, 0, ClusterKind::Netflow, &[1, 2]);
        let b = cluster(2, 0, ClusterKind::Scan, &[1, 2]);
        let expected = 1.0 - (-2.0f64).exp();
        assert!((cluster_correlation(&a, &b, 0, 0) - expected).abs() < 1e-9);
    }

    #[test]
    fn disjoint_host_sets_do_not_correlate() {
        let a = cluster(1, 0, ClusterKind::Netflow, &[1, 2]);
        let b = cluster(2, 0, ClusterKind::Netflow, &[3, 4]);
        assert_eq!(cluster_correlation(&a, &b, 0, 1), 0.0);
    }

    #[test]
    fn partial_overlap_one_window_apart_stays_below_default_threshold() {
        let a = cluster(1, 0, ClusterKind::Netflow, &[1, 2, 3]);
        let b = cluster(2, 1, ClusterKind::Netflow, &[2, 3, 4]);
        let expected = 1.0 - (-0.5f64).exp();
        let got = cluster_correlation(&a, &b, 0, 1);
        assert!((got - expected).abs() < 1e-9);
        assert!(got < 0.65);
    }

    #[test]
    fn tw_correlation_counts_netflow_and_scan_points() {
        // h=1 sits in a netflow cluster {1,2,3} and a scan cluster {1,2}
        // within the same window; their correlation 1−e^(−4/3) ≈ 0.736
        // clears the 0.65 default, so both clusters score: 1 + 2 = 3.
        let n1 = cluster(1, 5, ClusterKind::Netflow, &[1, 2, 3]);
        let s1 = cluster(2, 5, ClusterKind::Scan, &[1, 2]);
        let current = [&n1, &s1];
        let got = tw_correlation(host(1), &current, &current, 5, 5, &Config::default());
        assert_eq!(got, 3.0);
    }

    #[test]
    fn tw_correlation_returns_zero_when_nothing_clears_threshold() {
        let n1 = cluster(1, 5, ClusterKind::Netflow, &[1, 2]);
        let n2 = cluster(2, 4, ClusterKind::Netflow, &[1, 9]);
        // ∩ = {1}, ∪ = 3, gap 1: 1−e^(−1/6) ≈ 0.154 < 0.65.
        let got = tw_correlation(host(1), &[&n1], &[&n2], 5, 4, &Config::default());
        assert_eq!(got, 0.0);
    }

    #[test]
    fn tw_correlation_is_capped_at_max_tw_score() {
        let clusters: Vec<Cluster> =
            (0..6).map(|k| cluster(k, 5, ClusterKind::Netflow, &[1, 2])).collect();
        let refs: Vec<&Cluster> = clusters.iter().collect();
        let got = tw_correlation(host(1), &refs, &refs, 5, 5, &Config::default());
        assert_eq!(got, 5.0);
    }

    #[test]
    fn a_lone_cluster_does_not_correlate_with_itself() {
        let n1 = cluster(1, 5, ClusterKind::Netflow, &[1, 2]);
        let got = tw_correlation(host(1), &[&n1], &[&n1], 5, 5, &Config::default());
        assert_eq!(got, 0.0);
    }

    #[test]
    fn score_returns_the_best_window_correlation() {
        let cfg = Config::default();
        let mut store = WindowStore::new();
        // Window 2 and the current window 3 share a 3-host netflow cluster
        // plus a scan cluster, yielding tw scores of 3 in the best case.
        store.insert(2, vec![cluster(10, 2, ClusterKind::Netflow, &[1, 2, 3])]);
        store.insert(
            3,
            vec![
                cluster(20, 3, ClusterKind::Netflow, &[1, 2, 3]),
                cluster(21, 3, ClusterKind::Scan, &[1, 2]),
            ],
        );
        let state = HostScoreState::new(host(1));
        let got = score(host(1), 3, &store, &state, &cfg);
        assert_eq!(got, 3.0);
    }

    #[test]
    fn score_decays_by_distance_to_last_correlated_window() {
        let cfg = Config::default();
        let store = WindowStore::new();
        let mut state = HostScoreState::new(host(1));
        state.score = 12.0;
        state.last_correlated_tw = Some(6);
        assert_eq!(score(host(1), 10, &store, &state, &cfg), -4.0);
    }

    #[test]
    fn never_correlated_host_gets_a_zero_delta() {
        let cfg = Config::default();
        let store = WindowStore::new();
        let state = HostScoreState::new(host(1));
        assert_eq!(score(host(1), 9, &store, &state, &cfg), 0.0);
    }

    fn max_score_window(window: u64, first_id: u64) -> Vec<Cluster> {
        // One netflow + two scan clusters over the same 4 bots: the
        // same-window pairs all correlate, so the set is worth 1+2+2 = 5.
        vec![
            cluster(first_id, window, ClusterKind::Netflow, &[1, 2, 3, 4]),
            cluster(first_id + 1, window, ClusterKind::Scan, &[1, 2, 3, 4]),
            cluster(first_id + 2, window, ClusterKind::Scan, &[1, 2, 3, 4]),
        ]
    }

    #[test]
    fn bots_earning_max_score_every_window_are_flagged_at_window_six() {
        let cfg = Config::default();
        let mut store = WindowStore::new();
        let mut table = ScoreTable::new();
        let mut first_flagged = None;
        for w in 0..8 {
            let (rows, flagged) =
                update_and_report(w, max_score_window(w, w * 10), &mut store, &mut table, &cfg);
            assert!(rows.iter().all(|r| r.delta == 5.0));
            if !flagged.is_empty() && first_flagged.is_none() {
                first_flagged = Some(w);
                assert_eq!(flagged.len(), 4);
                // 7 windows of 5 points: 35 > 33.
                assert_eq!(flagged[0].1, 35.0);
            }
        }
        assert_eq!(first_flagged, Some(6));
    }

    #[test]
    fn uninvolved_hosts_stay_at_zero_and_are_never_flagged() {
        let cfg = Config::default();
        let mut store = WindowStore::new();
        let mut table = ScoreTable::new();
        for w in 0..10 {
            let (rows, flagged) =
                update_and_report(w, max_score_window(w, w * 10), &mut store, &mut table, &cfg);
            assert!(flagged.iter().all(|(h, _)| *h != host(9)));
            assert!(rows.iter().all(|r| r.host != host(9)));
        }
        assert!(table.get(host(9)).is_none());
    }

    #[test]
    fn idle_bots_decay_one_two_three_and_clamp_at_zero() {
        let cfg = Config::default();
        let mut store = WindowStore::new();
        let mut table = ScoreTable::new();
        for w in 0..4 {
            update_and_report(w, max_score_window(w, w * 10), &mut store, &mut table, &cfg);
        }
        assert_eq!(table.get(host(1)).unwrap().score, 20.0);
        let mut deltas = Vec::new();
        for w in 4..12 {
            let (rows, _) = update_and_report(w, Vec::new(), &mut store, &mut table, &cfg);
            deltas.extend(rows.iter().filter(|r| r.host == host(1)).map(|r| r.delta));
        }
        // 20 − (1+2+3+4+5) = 5, then −6 clamps to 0 and the host drops out
        // of the decay set.
        assert_eq!(&deltas[..6], &[-1.0, -2.0, -3.0, -4.0, -5.0, -6.0]);
        assert_eq!(table.get(host(1)).unwrap().score, 0.0);
        assert!(deltas.len() == 6);
    }

    #[test]
    fn correlation_decays_with_window_distance() {
        let a = cluster(1, 0, ClusterKind::Netflow, &[1, 2, 3]);
        let b = cluster(2, 0, ClusterKind::Netflow, &[1, 2, 3]);
        let mut last = f64::INFINITY;
        for gap in 0..5 {
            let d = cluster_correlation(&a, &b, 0, gap);
            assert!(d < last);
            last = d;
        }
    }

    #[test]
    fn correlation_is_invariant_under_host_relabeling() {
        // The value depends only on |∩| and |∪|.
        let a = cluster(1, 0, ClusterKind::Netflow, &[1, 2, 3]);
        let b = cluster(2, 1, ClusterKind::Netflow, &[2, 3, 4, 5]);
        let relabel = |hosts: &[u8]| -> Vec<u8> { hosts.iter().map(|h| h + 100).collect() };
        let a2 = cluster(1, 0, ClusterKind::Netflow, &relabel(&[1, 2, 3]));
        let b2 = cluster(2, 1, ClusterKind::Netflow, &relabel(&[2, 3, 4, 5]));
        assert_eq!(cluster_correlation(&a, &b, 0, 1), cluster_correlation(&a2, &b2, 0, 1));
    }

    #[test]
    fn lowering_the_threshold_never_lowers_tw_correlation() {
        let n1 = cluster(1, 5, ClusterKind::Netflow, &[1, 2, 3]);
        let n2 = cluster(2, 4, ClusterKind::Netflow, &[1, 2, 9]);
        let s1 = cluster(3, 4, ClusterKind::Scan, &[1, 7]);
        let previous = [&n2, &s1];
        let mut last = 0.0f64;
        for thr in [0.9, 0.65, 0.4, 0.2, 0.05] {
            let mut cfg = Config::default();
            cfg.corr_thr = thr;
            let got = tw_correlation(host(1), &[&n1], &previous, 5, 4, &cfg);
            assert!(got >= last, "thr {thr}: {got} < {last}");
            assert!(got <= cfg.max_tw_score);
            last = got;
        }
    }

    #[test]
    fn duplicating_coordinated_windows_never_lowers_cumulative_scores() {
        let cfg = Config::default();
        let active = |w: u64| max_score_window(w, w * 10);

        // Cohort active in windows 0 and 2 only.
        let mut store_a = WindowStore::new();
        let mut table_a = ScoreTable::new();
        for w in 0..4 {
            let clusters = if w == 0 || w == 2 { active(w) } else { Vec::new() };
            update_and_report(w, clusters, &mut store_a, &mut table_a, &cfg);
        }

        // Same run with window 1 also active.
        let mut store_b = WindowStore::new();
        let mut table_b = ScoreTable::new();
        for w in 0..4 {
            let clusters = if w <= 2 { active(w) } else { Vec::new() };
            update_and_report(w, clusters, &mut store_b, &mut table_b, &cfg);
        }

        for h in [host(1), host(2), host(3), host(4)] {
            let a = table_a.get(h).map_or(0.0, |s| s.score);
            let b = table_b.get(h).map_or(0.0, |s| s.score);
            assert!(b >= a, "host {h}: {b} < {a}");
        }
    }
}
