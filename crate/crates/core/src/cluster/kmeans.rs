//! Seeded k-means for the spectral embedding rows.
//!
//! k-means++ initialization, Lloyd iterations to a centroid-shift tolerance,
//! empty clusters re-seeded at the point farthest from its own centroid.
//! Restarts run in parallel on seeds derived from `(seed, restart index)`
//! and the winner is the lowest `(inertia, restart index)`, so the outcome
//! is deterministic regardless of scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hash::stream_seed;

#[derive(Debug, Clone)]
pub(crate) struct KMeansOutcome {
    pub assignment: Vec<usize>,
    pub inertia: f64,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

fn nearest_centroid(row: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = dist2(row, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(rows: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(rows[rng.random_range(0..n)].clone());
    let mut d2: Vec<f64> = rows.iter().map(|r| dist2(r, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            // Every point coincides with a chosen centroid already.
            rng.random_range(0..n)
        };
        centroids.push(rows[idx].clone());
        let newest = centroids.len() - 1;
        for (i, r) in rows.iter().enumerate() {
            let d = dist2(r, &centroids[newest]);
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centroids
}

/// Moves, for each empty cluster, the point farthest from its own centroid
/// (among clusters that keep at least one member) onto the empty centroid.
/// With `n >= k` this always terminates with every cluster non-empty.
fn fix_empty_clusters(
    rows: &[Vec<f64>],
    assignment: &mut [usize],
    centroids: &mut [Vec<f64>],
) -> bool {
    let k = centroids.len();
    for _ in 0..k {
        let mut counts = vec![0usize; k];
        for &a in assignment.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return true;
        };
        let mut donor: Option<(usize, f64)> = None;
        for (i, row) in rows.iter().enumerate() {
            if counts[assignment[i]] <= 1 {
                continue;
            }
            let d = dist2(row, &centroids[assignment[i]]);
            if donor.map_or(true, |(_, best)| d > best) {
                donor = Some((i, d));
            }
        }
        let Some((i, _)) = donor else {
            return false;
        };
        centroids[empty] = rows[i].clone();
        assignment[i] = empty;
    }
    let mut counts = vec![0usize; k];
    for &a in assignment.iter() {
        counts[a] += 1;
    }
    counts.iter().all(|&c| c > 0)
}

fn run_once(
    rows: &[Vec<f64>],
    k: usize,
    seed: u64,
    tol: f64,
    max_iter: usize,
) -> Option<KMeansOutcome> {
    let n = rows.len();
    let dim = rows[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(rows, k, &mut rng);
    let mut assignment = vec![0usize; n];

    for _ in 0..max_iter {
        for (i, row) in rows.iter().enumerate() {
            assignment[i] = nearest_centroid(row, &centroids).0;
        }
        if !fix_empty_clusters(rows, &mut assignment, &mut centroids) {
            return None;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, row) in rows.iter().enumerate() {
            counts[assignment[i]] += 1;
            for (s, v) in sums[assignment[i]].iter_mut().zip(row) {
                *s += v;
            }
        }
        let mut shift2: f64 = 0.0;
        for c in 0..k {
            for s in sums[c].iter_mut() {
                *s /= counts[c] as f64;
            }
            shift2 = shift2.max(dist2(&sums[c], &centroids[c]));
        }
        centroids = sums;
        if shift2.sqrt() <= tol {
            break;
        }
    }

    for (i, row) in rows.iter().enumerate() {
        assignment[i] = nearest_centroid(row, &centroids).0;
    }
    if !fix_empty_clusters(rows, &mut assignment, &mut centroids) {
        return None;
    }
    let inertia = rows
        .iter()
        .enumerate()
        .map(|(i, row)| dist2(row, &centroids[assignment[i]]))
        .sum();
    Some(KMeansOutcome {
        assignment,
        inertia,
    })
}

pub(crate) fn kmeans(
    rows: &[Vec<f64>],
    k: usize,
    seed: u64,
    restarts: usize,
    tol: f64,
    max_iter: usize,
) -> Result<KMeansOutcome> {
    let n = rows.len();
    if k == 0 || restarts == 0 {
        return Err(Error::InvalidParam(
            "k-means needs k >= 1 and at least one restart".into(),
        ));
    }
    if n < k {
        return Err(Error::InvalidParam(format!(
            "k-means needs at least k = {k} points, got {n}"
        )));
    }
    let outcomes: Vec<Option<KMeansOutcome>> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            run_once(
                rows,
                k,
                stream_seed(seed, &format!("kmeans-restart:{r}")),
                tol,
                max_iter,
            )
        })
        .collect();
    outcomes
        .into_iter()
        .enumerate()
        .filter_map(|(r, o)| o.map(|o| (r, o)))
        .min_by(|a, b| {
            (a.1.inertia, a.0)
                .partial_cmp(&(b.1.inertia, b.0))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .map(|(_, o)| o)
        .ok_or(Error::EmptyCluster { k, n })
}
