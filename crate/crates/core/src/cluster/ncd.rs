//! Normalized compression distance over flow payloads, and the weighted
//! two-direction payload distance built on it.

use std::io::Write;

use flate2::write::DeflateEncoder;
use flate2::Compression;
use rayon::prelude::*;

use crate::model::Netflow;

/// Deflate-compressed length of `data`, at maximum compression. The
/// compressor is fixed for the whole run so distances are comparable.
pub fn compressed_len(data: &[u8]) -> usize {
    let mut enc = DeflateEncoder::new(Vec::new(), Compression::best());
    enc.write_all(data).expect("in-memory deflate cannot fail");
    enc.finish().expect("in-memory deflate cannot fail").len()
}

/// NCD(x, y) = (C(xy) − min(C(x), C(y))) / max(C(x), C(y)).
///
/// The concatenation is canonicalized (lexicographically smaller byte string
/// first) so the result is exactly symmetric. Two empty inputs have
/// distance 0 by definition. Real compressors can exceed 1 slightly.
pub fn ncd(x: &[u8], y: &[u8]) -> f64 {
    ncd_cached(x, compressed_len(x), y, compressed_len(y))
}

/// NCD with the single-input compressed lengths precomputed; used by the
/// pairwise matrix to compress each payload once instead of once per pair.
pub fn ncd_cached(x: &[u8], cx: usize, y: &[u8], cy: usize) -> f64 {
    if x.is_empty() && y.is_empty() {
        return 0.0;
    }
    let (a, b) = if x <= y { (x, y) } else { (y, x) };
    let mut joined = Vec::with_capacity(a.len() + b.len());
    joined.extend_from_slice(a);
    joined.extend_from_slice(b);
    let cxy = compressed_len(&joined);
    let (lo, hi) = (cx.min(cy), cx.max(cy));
    (cxy.saturating_sub(lo)) as f64 / hi as f64
}

/// Weighted payload distance between two netflows: the sent-direction and
/// received-direction NCDs combined with weights proportional to the
/// retained payload lengths each direction contributes. The weights sum to
/// 1 whenever any payload is non-empty; four empty payloads give distance 0.
pub fn payload_distance(fi: &Netflow, fj: &Netflow) -> f64 {
    let cache = |f: &Netflow| {
        (compressed_len(&f.sent_payload), compressed_len(&f.recv_payload))
    };
    let (csi, cri) = cache(fi);
    let (csj, crj) = cache(fj);
    payload_distance_cached(fi, (csi, cri), fj, (csj, crj))
}

fn payload_distance_cached(
    fi: &Netflow,
    (csi, cri): (usize, usize),
    fj: &Netflow,
    (csj, crj): (usize, usize),
) -> f64 {
    let sent_len = (fi.sent_payload.len() + fj.sent_payload.len()) as f64;
    let recv_len = (fi.recv_payload.len() + fj.recv_payload.len()) as f64;
    let total = sent_len + recv_len;
    if total == 0.0 {
        return 0.0;
    }
    let w_s = sent_len / total;
    let w_r = recv_len / total;
    let mut d = 0.0;
    if w_s > 0.0 {
        d += w_s * ncd_cached(&fi.sent_payload, csi, &fj.sent_payload, csj);
    }
    if w_r > 0.0 {
        d += w_r * ncd_cached(&fi.recv_payload, cri, &fj.recv_payload, crj);
    }
    d
}

/// The payload direction weights (w_s, w_r) for a flow pair; exposed for
/// tests of the weighting rule.
pub fn payload_weights(fi: &Netflow, fj: &Netflow) -> (f64, f64) {
    let sent_len = (fi.sent_payload.len() + fj.sent_payload.len()) as f64;
    let recv_len = (fi.recv_payload.len() + fj.recv_payload.len()) as f64;
    let total = sent_len + recv_len;
    if total == 0.0 {
        return (0.0, 0.0);
    }
    (sent_len / total, recv_len / total)
}

/// Symmetric pairwise distance matrix with zero diagonal.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        let pairs: Vec<(usize, usize)> =
            (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let values: Vec<f64> = pairs.par_iter().map(|&(i, j)| f(i, j)).collect();
        let mut d = vec![0.0; n * n];
        for (&(i, j), &v) in pairs.iter().zip(&values) {
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
        DistanceMatrix { n, d }
    }

    /// Pairwise payload distances, compressing each payload once.
    pub fn payload_distances(flows: &[&Netflow]) -> Self {
        let cached: Vec<(usize, usize)> = flows
            .par_iter()
            .map(|f| (compressed_len(&f.sent_payload), compressed_len(&f.recv_payload)))
            .collect();
        Self::from_fn(flows.len(), |i, j| {
            payload_distance_cached(flows[i], cached[i], flows[j], cached[j])
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }
}
