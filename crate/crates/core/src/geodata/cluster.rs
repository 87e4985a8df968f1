//! Station-position estimation: spherical k-means over report locations.
//!
//! Assignment uses the largest dot product between unit vectors, which is the
//! same argmin as the haversine distance (both are monotone in the central
//! angle). Centers are the normalised mean unit vector of their members.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{haversine_km, GeoPoint, EARTH_RADIUS_KM};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationCluster {
    pub center: GeoPoint,
    /// Indices into the point slice handed to [`cluster_stations`].
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterOptions {
    pub max_iter: usize,
    /// Independent k-means++ restarts; the lowest-inertia run wins.
    pub restarts: usize,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        ClusterOptions {
            max_iter: 100,
            restarts: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Clustering {
    /// Sorted by center latitude, then longitude.
    pub clusters: Vec<StationCluster>,
    /// Cluster index per input point.
    pub assignment: Vec<usize>,
    /// Sum of squared haversine distances (km²) to the assigned center.
    pub inertia: f64,
}

impl Clustering {
    pub fn centers(&self) -> Vec<GeoPoint> {
        self.clusters.iter().map(|c| c.center).collect()
    }
}

#[inline]
fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Great-circle distance from the dot product of two unit vectors.
#[inline]
fn dist_from_dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    let chord = (dx * dx + dy * dy + dz * dz).sqrt();
    2.0 * EARTH_RADIUS_KM * (0.5 * chord).min(1.0).asin()
}

fn nearest(p: &[f64; 3], centers: &[[f64; 3]]) -> usize {
    let mut best = 0;
    let mut best_dot = f64::NEG_INFINITY;
    for (j, c) in centers.iter().enumerate() {
        let d = dot(p, c);
        if d > best_dot {
            best_dot = d;
            best = j;
        }
    }
    best
}

/// Group report locations into `m` clusters whose centers approximate base
/// station positions.
///
/// The result depends only on the multiset of points (they are put in a
/// canonical order before seeding) and on `seed`.
pub fn cluster_stations(points: &[GeoPoint], m: usize, seed: u64, opts: ClusterOptions) -> Result<Clustering> {
    if points.is_empty() {
        return Err(Error::InvalidInput("cannot cluster an empty point set".into()));
    }
    if m == 0 {
        return Err(Error::InvalidInput("cluster count must be positive".into()));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (points[a], points[b]);
        pa.lat.total_cmp(&pb.lat).then(pa.lon.total_cmp(&pb.lon)).then(a.cmp(&b))
    });
    let distinct = 1 + order
        .windows(2)
        .filter(|w| points[w[0]] != points[w[1]])
        .count();
    if m > distinct {
        return Err(Error::InvalidInput(format!(
            "requested {m} clusters but only {distinct} distinct points"
        )));
    }
    let units: Vec<[f64; 3]> = order.iter().map(|&i| points[i].to_unit()).collect();

    let mut best: Option<(f64, Vec<[f64; 3]>, Vec<usize>)> = None;
    for run in 0..opts.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(run as u64);
        let (centers, assign, inertia) = lloyd(&units, seed_plus_plus(&units, m, &mut rng), opts.max_iter);
        if best.as_ref().is_none_or(|b| inertia < b.0) {
            best = Some((inertia, centers, assign));
        }
    }
    let (inertia, centers, assign_sorted) = best.expect("at least one run");

    // Canonical cluster order: by center lat, then lon.
    let center_pts: Vec<GeoPoint> = centers.iter().map(|c| GeoPoint::from_unit(*c)).collect();
    let mut corder: Vec<usize> = (0..m).collect();
    corder.sort_by(|&a, &b| {
        center_pts[a]
            .lat
            .total_cmp(&center_pts[b].lat)
            .then(center_pts[a].lon.total_cmp(&center_pts[b].lon))
    });
    let mut relabel = vec![0; m];
    for (new, &old) in corder.iter().enumerate() {
        relabel[old] = new;
    }
    let mut assignment = vec![0; points.len()];
    let mut clusters: Vec<StationCluster> = corder
        .iter()
        .map(|&old| StationCluster {
            center: center_pts[old],
            members: Vec::new(),
        })
        .collect();
    for (sorted_idx, &orig) in order.iter().enumerate() {
        let c = relabel[assign_sorted[sorted_idx]];
        assignment[orig] = c;
    }
    for (i, &c) in assignment.iter().enumerate() {
        clusters[c].members.push(i);
    }
    Ok(Clustering {
        clusters,
        assignment,
        inertia,
    })
}

fn seed_plus_plus(units: &[[f64; 3]], m: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let n = units.len();
    let mut centers = Vec::with_capacity(m);
    centers.push(units[rng.random_range(0..n)]);
    let mut d2: Vec<f64> = units
        .iter()
        .map(|p| {
            let d = dist_from_dot(p, &centers[0]);
            d * d
        })
        .collect();
    while centers.len() < m {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    if target < w {
                        chosen = Some(i);
                        break;
                    }
                    target -= w;
                }
            }
            // Rounding can leave `target` just above the last positive weight.
            chosen.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("positive weight"))
        } else {
            unreachable!("fewer distinct points than requested clusters")
        };
        let c = units[pick];
        centers.push(c);
        d2.par_iter_mut().zip(units.par_iter()).for_each(|(w, p)| {
            let d = dist_from_dot(p, &c);
            *w = w.min(d * d);
        });
    }
    centers
}

fn lloyd(units: &[[f64; 3]], mut centers: Vec<[f64; 3]>, max_iter: usize) -> (Vec<[f64; 3]>, Vec<usize>, f64) {
    let m = centers.len();
    let mut assign: Vec<usize> = units.par_iter().map(|p| nearest(p, &centers)).collect();
    for _ in 0..max_iter {
        let mut sums = vec![[0.0f64; 3]; m];
        let mut counts = vec![0usize; m];
        for (p, &c) in units.iter().zip(&assign) {
            sums[c][0] += p[0];
            sums[c][1] += p[1];
            sums[c][2] += p[2];
            counts[c] += 1;
        }
        for j in 0..m {
            if counts[j] > 0 {
                let s = sums[j];
                let norm = dot(&s, &s).sqrt();
                centers[j] = [s[0] / norm, s[1] / norm, s[2] / norm];
            }
        }
        // Empty clusters take over the point farthest from its own center.
        for j in 0..m {
            if counts[j] == 0 {
                let (far, _) = units
                    .iter()
                    .zip(&assign)
                    .enumerate()
                    .filter(|(_, (_, &c))| counts[c] > 1)
                    .map(|(i, (p, &c))| (i, dist_from_dot(p, &centers[c])))
                    .fold((usize::MAX, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
                if far != usize::MAX {
                    counts[assign[far]] -= 1;
                    assign[far] = j;
                    counts[j] = 1;
                    centers[j] = units[far];
                }
            }
        }
        let next: Vec<usize> = units.par_iter().map(|p| nearest(p, &centers)).collect();
        let changed = next != assign;
        assign = next;
        if !changed {
            break;
        }
    }
    let inertia = units
        .iter()
        .zip(&assign)
        .map(|(p, &c)| {
            let d = dist_from_dot(p, &centers[c]);
            d * d
        })
        .sum();
    (centers, assign, inertia)
}

/// Indices of the `count` centers closest to `centers[i]`, ascending by
/// haversine distance; equal distances are ordered by index. `i` itself is
/// never returned.
pub fn nearest_neighbors(centers: &[GeoPoint], i: usize, count: usize) -> Result<Vec<usize>> {
    if i >= centers.len() {
        return Err(Error::OutOfRange(format!(
            "center index {i} out of range for {} centers",
            centers.len()
        )));
    }
    if count >= centers.len() {
        return Err(Error::InvalidInput(format!(
            "asked for {count} neighbours among {} centers",
            centers.len()
        )));
    }
    let mut cand: Vec<(f64, usize)> = centers
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, &c)| (haversine_km(centers[i], c), j))
        .collect();
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(cand.into_iter().take(count).map(|(_, j)| j).collect())
}
