//! X-means: k-means extended with BIC-guided centroid splitting to choose
//! the number of clusters.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

const MAX_LLOYD_ITERS: usize = 100;
const VARIANCE_FLOOR: f64 = 1e-9;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn mean(points: &[&[f64]]) -> Vec<f64> {
    let dims = points[0].len();
    let mut m = vec![0.0; dims];
    for p in points {
        for (acc, v) in m.iter_mut().zip(*p) {
            *acc += v;
        }
    }
    for v in &mut m {
        *v /= points.len() as f64;
    }
    m
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Lloyd iterations until assignments stabilize. Centroids that lose all
/// points are respawned on the point currently farthest from its own
/// centroid, so every returned centroid owns at least one point.
fn lloyd(points: &[&[f64]], mut centroids: Vec<Vec<f64>>) -> (Vec<Vec<f64>>, Vec<usize>) {
    let k = centroids.len();
    let mut assignments = vec![usize::MAX; points.len()];
    for _ in 0..MAX_LLOYD_ITERS {
        let new_assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        let mut counts = vec![0usize; k];
        for &a in &new_assignments {
            counts[a] += 1;
        }
        let stable = new_assignments == assignments;
        assignments = new_assignments;
        let mut respawned = false;
        for empty in 0..k {
            if counts[empty] > 0 {
                continue;
            }
            let (far_idx, _) = points
                .iter()
                .enumerate()
                .filter(|(i, _)| counts[assignments[*i]] > 1)
                .map(|(i, p)| (i, sq_dist(p, &centroids[assignments[i]])))
                .fold((usize::MAX, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            if far_idx == usize::MAX {
                continue;
            }
            counts[assignments[far_idx]] -= 1;
            assignments[far_idx] = empty;
            counts[empty] = 1;
            centroids[empty] = points[far_idx].to_vec();
            respawned = true;
        }
        if stable && !respawned {
            break;
        }
        let dims = points[0].len();
        let mut sums = vec![vec![0.0; dims]; k];
        for (p, &a) in points.iter().zip(&assignments) {
            for (acc, v) in sums[a].iter_mut().zip(*p) {
                *acc += v;
            }
        }
        for (c, (sum, count)) in centroids.iter_mut().zip(sums.iter().zip(&counts)) {
            if *count > 0 {
                *c = sum.iter().map(|v| v / *count as f64).collect();
            }
        }
    }
    (centroids, assignments)
}

/// k-means++ seeding: the first center is drawn uniformly, subsequent ones
/// proportionally to squared distance from the nearest chosen center.
fn kmeanspp_init(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())].to_vec());
    while centroids.len() < k {
        let weights: Vec<f64> = points
            .iter()
            .map(|p| centroids.iter().map(|c| sq_dist(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = weights.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = points.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if target < *w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            // All points coincide with existing centers; any choice is
            // equivalent.
            0
        };
        centroids.push(points[idx].to_vec());
    }
    centroids
}

/// BIC of a centroid model over one region of points, under identical
/// spherical Gaussians: log-likelihood minus (p/2)·log n, where p counts the
/// free parameters (k−1 mixing weights, k·d centroid coordinates, one shared
/// variance). Higher is better. Zero-variance regions are floored so the
/// score stays finite.
pub fn bic(points: &[&[f64]], centroids: &[Vec<f64>]) -> f64 {
    let n = points.len();
    let k = centroids.len();
    debug_assert!(n > 0 && k > 0);
    let dims = points[0].len() as f64;

    let assignments: Vec<usize> = points.iter().map(|p| nearest(p, centroids)).collect();
    let mut counts = vec![0usize; k];
    let mut rss = 0.0;
    for (p, &a) in points.iter().zip(&assignments) {
        counts[a] += 1;
        rss += sq_dist(p, &centroids[a]);
    }

    let variance = if n > k { (rss / (n - k) as f64).max(VARIANCE_FLOOR) } else { VARIANCE_FLOOR };
    let nf = n as f64;
    let mut ll = -(nf * dims / 2.0) * (2.0 * std::f64::consts::PI * variance).ln()
        - (n.saturating_sub(k)) as f64 / 2.0;
    for &c in &counts {
        if c > 0 {
            ll += c as f64 * ((c as f64) / nf).ln();
        }
    }
    let free_params = (k - 1) as f64 + k as f64 * dims + 1.0;
    ll - (free_params / 2.0) * nf.ln()
}

/// Partitions `points` into 1..=k_max clusters. Starting from a single
/// centroid, each round runs k-means, then tries to split every centroid in
/// two (k-means++ seeded from `rng`) and keeps the split iff the two-centroid
/// BIC of that region beats the one-centroid BIC. Deterministic for a given
/// rng seed.
pub fn xmeans(points: &[Vec<f64>], k_max: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    assert!(k_max >= 1);
    if points.is_empty() {
        return Vec::new();
    }
    let refs: Vec<&[f64]> = points.iter().map(|p| p.as_slice()).collect();
    let mut centroids = vec![mean(&refs)];
    let mut assignments;

    loop {
        let (improved, assigned) = lloyd(&refs, centroids);
        centroids = improved;
        assignments = assigned;
        if centroids.len() >= k_max {
            break;
        }

        let regions: Vec<Vec<usize>> = {
            let mut r = vec![Vec::new(); centroids.len()];
            for (i, &a) in assignments.iter().enumerate() {
                r[a].push(i);
            }
            r
        };
        let mut budget = k_max - centroids.len();
        let mut next_centroids = Vec::with_capacity(centroids.len() + budget);
        let mut split_any = false;
        for (centroid, region) in centroids.iter().zip(&regions) {
            let region_pts: Vec<&[f64]> = region.iter().map(|&i| refs[i]).collect();
            if budget == 0 || region_pts.len() < 2 {
                next_centroids.push(centroid.clone());
                continue;
            }
            let parent = bic(&region_pts, std::slice::from_ref(centroid));
            let seeded = kmeanspp_init(&region_pts, 2, rng);
            let (children, child_assign) = lloyd(&region_pts, seeded);
            let both_used = child_assign.contains(&0) && child_assign.contains(&1);
            if both_used && bic(&region_pts, &children) > parent {
                next_centroids.extend(children);
                split_any = true;
                budget -= 1;
            } else {
                next_centroids.push(centroid.clone());
            }
        }
        if !split_any {
            break;
        }
        centroids = next_centroids;
    }

    let mut partition = vec![Vec::new(); centroids.len()];
    for (i, &a) in assignments.iter().enumerate() {
        partition[a].push(i);
    }
    partition.retain(|p| !p.is_empty());
    partition
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    fn blob(center: &[f64], n: usize, spread: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                center
                    .iter()
                    .map(|c| c + spread * (rng.random::<f64>() * 2.0 - 1.0))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn identical_points_stay_one_cluster() {
        let points = vec![vec![3.0, -1.0]; 12];
        let partition = xmeans(&points, 16, &mut rng());
        assert_eq!(partition.len(), 1);
        assert_eq!(partition[0].len(), 12);
    }

    #[test]
    fn two_separated_blobs_are_recovered_exactly() {
        let mut r = rng();
        let mut points = blob(&[0.0, 0.0], 20, 1.0, &mut r);
        points.extend(blob(&[10.0, 10.0], 20, 1.0, &mut r));
        let partition = xmeans(&points, 16, &mut rng());
        assert_eq!(partition.len(), 2);
        let mut sides: Vec<Vec<usize>> = partition;
        sides.sort_by_key(|s| s[0]);
        assert_eq!(sides[0], (0..20).collect::<Vec<_>>());
        assert_eq!(sides[1], (20..40).collect::<Vec<_>>());
    }

    #[test]
    fn k_is_bounded_by_k_max() {
        let points: Vec<Vec<f64>> =
            (0..5).map(|i| vec![1000.0 * i as f64, -500.0 * i as f64]).collect();
        let partition = xmeans(&points, 2, &mut rng());
        assert_eq!(partition.len(), 2);
    }

    #[test]
    fn single_point_is_a_singleton_partition() {
        let points = vec![vec![1.0, 2.0, 3.0]];
        let partition = xmeans(&points, 4, &mut rng());
        assert_eq!(partition, vec![vec![0]]);
    }

    #[test]
    fn xmeans_is_deterministic_under_a_fixed_seed() {
        let mut r = rng();
        let mut points = blob(&[0.0, 0.0, 0.0], 30, 2.0, &mut r);
        points.extend(blob(&[8.0, -3.0, 5.0], 25, 2.0, &mut r));
        points.extend(blob(&[-7.0, 9.0, 1.0], 25, 2.0, &mut r));
        let a = xmeans(&points, 16, &mut rng());
        let b = xmeans(&points, 16, &mut rng());
        assert_eq!(a, b);
    }

    #[test]
    fn bic_prefers_one_centroid_on_identical_points() {
        let points = vec![vec![1.0, 1.0]; 10];
        let refs: Vec<&[f64]> = points.iter().map(|p| p.as_slice()).collect();
        let one = bic(&refs, &[vec![1.0, 1.0]]);
        let two = bic(&refs, &[vec![1.0, 1.0], vec![1.0, 1.0 + 1e-12]]);
        assert!(one > two, "one-centroid {one} should beat two-centroid {two}");
        assert!(one.is_finite() && two.is_finite());
    }

    #[test]
    fn bic_prefers_two_centroids_on_far_blobs() {
        let mut r = rng();
        let mut points = blob(&[0.0, 0.0], 20, 1.0, &mut r);
        points.extend(blob(&[50.0, 50.0], 20, 1.0, &mut r));
        let refs: Vec<&[f64]> = points.iter().map(|p| p.as_slice()).collect();
        let one = bic(&refs, &[mean(&refs)]);
        let two = bic(&refs, &[vec![0.0, 0.0], vec![50.0, 50.0]]);
        assert!(two > one, "two-centroid {two} should beat one-centroid {one}");
    }

    #[test]
    fn bic_is_finite_for_a_single_point() {
        let points = [vec![2.0, 2.0]];
        let refs: Vec<&[f64]> = points.iter().map(|p| p.as_slice()).collect();
        assert!(bic(&refs, &[vec![2.0, 2.0]]).is_finite());
    }
}
