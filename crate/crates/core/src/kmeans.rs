//! Lloyd's k-means over 2-D points with k-means++ seeding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// Cluster index per input point.
    pub assignments: Vec<usize>,
    pub centroids: Vec<Point>,
    pub sse: f64,
    /// SSE after each assignment step, first entry from the seeded centroids.
    pub sse_history: Vec<f64>,
    pub iterations: usize,
}

#[inline]
fn dist2(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Nearest centroid; ties go to the lowest index.
fn nearest(p: &Point, centroids: &[Point]) -> (usize, f64) {
    let mut best = (0, dist2(p, &centroids[0]));
    for (j, c) in centroids.iter().enumerate().skip(1) {
        let d = dist2(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn seed_plus_plus(points: &[Point], k: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = None;
            for (i, &d) in d2.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                if target < d {
                    chosen = Some(i);
                    break;
                }
                target -= d;
            }
            // rounding can leave a sliver past the last positive weight
            chosen.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[idx];
        centroids.push(c);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p, &c));
        }
    }
    centroids
}

/// Assign every point to its nearest centroid, then re-seed empty clusters with
/// the point farthest from its centroid (taken from a cluster that keeps at
/// least one member). Returns the SSE of the resulting assignment.
fn assign(points: &[Point], centroids: &mut [Point], assignments: &mut [usize]) -> f64 {
    let k = centroids.len();
    let mut dists = vec![0.0; points.len()];
    let mut sizes = vec![0usize; k];
    for (i, p) in points.iter().enumerate() {
        let (j, d) = nearest(p, centroids);
        assignments[i] = j;
        dists[i] = d;
        sizes[j] += 1;
    }
    for j in 0..k {
        if sizes[j] > 0 {
            continue;
        }
        let mut far: Option<usize> = None;
        for i in 0..points.len() {
            if sizes[assignments[i]] < 2 {
                continue;
            }
            if far.is_none_or(|f| dists[i] > dists[f]) {
                far = Some(i);
            }
        }
        let Some(i) = far else { break };
        sizes[assignments[i]] -= 1;
        sizes[j] = 1;
        assignments[i] = j;
        centroids[j] = points[i];
        dists[i] = 0.0;
    }
    dists.iter().sum()
}

fn update(points: &[Point], assignments: &[usize], centroids: &mut [Point]) {
    let k = centroids.len();
    let mut acc = vec![[0.0f64; 2]; k];
    let mut counts = vec![0usize; k];
    for (p, &j) in points.iter().zip(assignments) {
        acc[j][0] += p[0];
        acc[j][1] += p[1];
        counts[j] += 1;
    }
    for j in 0..k {
        if counts[j] > 0 {
            centroids[j] = [acc[j][0] / counts[j] as f64, acc[j][1] / counts[j] as f64];
        }
    }
}

/// Cluster `points` into `cfg.k` groups.
///
/// Deterministic for a given seed. Stops when the relative SSE improvement
/// drops below `cfg.tol` or after `cfg.max_iters` Lloyd steps.
pub fn kmeans(points: &[Point], cfg: &KMeansConfig) -> Result<KMeansResult> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    if cfg.k == 0 || cfg.k > points.len() {
        return Err(Error::InvalidParams(format!(
            "k must lie in 1..={}, got {}",
            points.len(),
            cfg.k
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centroids = seed_plus_plus(points, cfg.k, &mut rng);
    let mut assignments = vec![0usize; points.len()];
    let mut sse = assign(points, &mut centroids, &mut assignments);
    let mut history = vec![sse];
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        iterations += 1;
        let prev = sse;
        update(points, &assignments, &mut centroids);
        sse = assign(points, &mut centroids, &mut assignments);
        history.push(sse);
        if prev <= 0.0 || (prev - sse) / prev < cfg.tol {
            break;
        }
    }
    // centroids are the means of the final assignment
    update(points, &assignments, &mut centroids);
    sse = points
        .iter()
        .zip(&assignments)
        .map(|(p, &j)| dist2(p, &centroids[j]))
        .sum();

    Ok(KMeansResult {
        assignments,
        centroids,
        sse,
        sse_history: history,
        iterations,
    })
}
