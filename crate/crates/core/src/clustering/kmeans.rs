//! Lloyd's k-means with k-means++ seeding over row-major points.

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use rayon::prelude::*;

use crate::seed::rng_for;

pub const MAX_RESTARTS: usize = 50;

#[derive(Clone, Debug)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Vec<f64>,
    pub inertia: f64,
    /// Inertia after each assignment/update round; strictly decreasing.
    pub history: Vec<f64>,
    pub restart: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
fn nearest(point: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus(points: &[f64], dim: usize, k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let n = points.len() / dim;
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(&points[first * dim..(first + 1) * dim]);
    let mut d2: Vec<f64> = points.chunks_exact(dim).map(|p| sq_dist(p, &centroids[..dim])).collect();
    for _ in 1..k {
        let pick = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(rng),
            Err(_) => rng.random_range(0..n),
        };
        let c = points[pick * dim..(pick + 1) * dim].to_vec();
        for (i, p) in points.chunks_exact(dim).enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &c));
        }
        centroids.extend_from_slice(&c);
    }
    centroids
}

fn update(points: &[f64], dim: usize, k: usize, labels: &[usize]) -> Vec<f64> {
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.chunks_exact(dim).zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l * dim..(l + 1) * dim].iter_mut().zip(p) {
            *s += x;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for s in &mut sums[c * dim..(c + 1) * dim] {
                *s /= counts[c] as f64;
            }
        }
    }
    sums
}

fn inertia(points: &[f64], dim: usize, centroids: &[f64], labels: &[usize]) -> f64 {
    points
        .chunks_exact(dim)
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, &centroids[l * dim..(l + 1) * dim]))
        .sum()
}

/// Moves the farthest member of the largest cluster into each empty cluster.
fn repair_empty(points: &[f64], dim: usize, k: usize, labels: &mut [usize], centroids: &[f64]) {
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else { return };
        let largest = (0..k).fold(0, |best, c| if counts[c] > counts[best] { c } else { best });
        if counts[largest] < 2 {
            return;
        }
        let mut far = (usize::MAX, -1.0);
        for (i, p) in points.chunks_exact(dim).enumerate() {
            if labels[i] == largest {
                let d = sq_dist(p, &centroids[largest * dim..(largest + 1) * dim]);
                if d > far.1 {
                    far = (i, d);
                }
            }
        }
        labels[far.0] = empty;
    }
}

fn lloyd(points: &[f64], dim: usize, k: usize, seed: u64, restart: usize) -> KMeansResult {
    let mut rng = rng_for(seed, "kmeans", restart as u64);
    let mut centroids = plus_plus(points, dim, k, &mut rng);
    let mut labels: Vec<usize> = points.chunks_exact(dim).map(|p| nearest(p, &centroids, dim).0).collect();
    repair_empty(points, dim, k, &mut labels, &centroids);
    centroids = update(points, dim, k, &labels);
    let mut history = vec![inertia(points, dim, &centroids, &labels)];
    for _ in 0..1000 {
        let mut next: Vec<usize> = points.chunks_exact(dim).map(|p| nearest(p, &centroids, dim).0).collect();
        // keep the current label when it is as close as the new one
        for (i, p) in points.chunks_exact(dim).enumerate() {
            let cur = sq_dist(p, &centroids[labels[i] * dim..(labels[i] + 1) * dim]);
            let new = sq_dist(p, &centroids[next[i] * dim..(next[i] + 1) * dim]);
            if cur <= new {
                next[i] = labels[i];
            }
        }
        repair_empty(points, dim, k, &mut next, &centroids);
        if next == labels {
            break;
        }
        let next_centroids = update(points, dim, k, &next);
        let value = inertia(points, dim, &next_centroids, &next);
        if value >= *history.last().expect("non-empty history") {
            break;
        }
        labels = next;
        centroids = next_centroids;
        history.push(value);
    }
    KMeansResult { inertia: *history.last().expect("non-empty history"), labels, centroids, history, restart }
}

/// Best of `restarts` k-means runs; the lowest restart index wins ties.
pub fn kmeans(points: &[f64], dim: usize, k: usize, restarts: usize, seed: u64) -> KMeansResult {
    assert!(dim > 0 && k > 0 && points.len().is_multiple_of(dim) && points.len() / dim >= k);
    let restarts = restarts.clamp(1, MAX_RESTARTS);
    let runs: Vec<KMeansResult> = (0..restarts).into_par_iter().map(|r| lloyd(points, dim, k, seed, r)).collect();
    runs.into_iter()
        .reduce(|best, run| if run.inertia < best.inertia { run } else { best })
        .expect("at least one restart")
}
