//! Average-linkage agglomerative clustering cut at a distance threshold.

use super::ncd::DistanceMatrix;

/// Agglomerates items bottom-up under average linkage (UPGMA), merging while
/// the closest pair of clusters lies at or below `dist_thr`, which is
/// equivalent to cutting the dendrogram at that height. Returns the
/// partition as lists of item indices, ordered by smallest member.
///
/// Inter-cluster distances are maintained with the Lance-Williams update
/// d(a∪b, x) = (|a|·d(a,x) + |b|·d(b,x)) / (|a|+|b|), which is exact for
/// average linkage.
pub fn cut_at(matrix: &DistanceMatrix, dist_thr: f64) -> Vec<Vec<usize>> {
    let n = matrix.len();
    if n == 0 {
        return Vec::new();
    }
    // Working copy of inter-cluster distances; entry i*n+j is meaningful
    // only while both i and j are alive.
    let mut dist: Vec<f64> = (0..n * n).map(|k| matrix.get(k / n, k % n)).collect();
    let mut alive: Vec<bool> = vec![true; n];
    let mut size: Vec<usize> = vec![1; n];
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();

    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            for j in i + 1..n {
                if !alive[j] {
                    continue;
                }
                let d = dist[i * n + j];
                if best.map_or(true, |(_, _, b)| d < b) {
                    best = Some((i, j, d));
                }
            }
        }
        let Some((a, b, d)) = best else { break };
        if d > dist_thr {
            break;
        }
        // Merge b into a.
        for x in 0..n {
            if alive[x] && x != a && x != b {
                let merged = (size[a] as f64 * dist[a * n + x] + size[b] as f64 * dist[b * n + x])
                    / (size[a] + size[b]) as f64;
                dist[a * n + x] = merged;
                dist[x * n + a] = merged;
            }
        }
        size[a] += size[b];
        alive[b] = false;
        let moved = std::mem::take(&mut members[b]);
        members[a].extend(moved);
    }

    let mut partition: Vec<Vec<usize>> = members
        .into_iter()
        .zip(alive)
        .filter_map(|(mut m, live)| {
            if live {
                m.sort_unstable();
                Some(m)
            } else {
                None
            }
        })
        .collect();
    partition.sort_by_key(|m| m[0]);
    partition
}
