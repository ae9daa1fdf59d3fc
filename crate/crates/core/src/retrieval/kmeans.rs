use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::vector;

pub const MAX_ITERATIONS: usize = 100;
pub const CONVERGENCE_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// Unit-length cluster centers.
    pub centers: Vec<Vec<f32>>,
    pub assignments: Vec<usize>,
    /// Sum of cosine distances after each assignment step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

/// Lloyd's iterations on the unit sphere with k-means++ seeding. Inputs are
/// normalized first; zero vectors are treated as-is and never attract a center.
pub fn spherical_kmeans(features: &[Vec<f32>], k: usize, seed: u64) -> KMeansResult {
    assert!(k >= 1 && !features.is_empty());
    let data: Vec<Vec<f32>> = features.iter().map(|f| unit(f)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_plus_plus(&data, k, &mut rng);
    let mut assignments = vec![0usize; data.len()];
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let objective = assign(&data, &centers, &mut assignments);
        trace.push(objective);
        if iterations == MAX_ITERATIONS {
            break;
        }
        iterations += 1;
        let dim = data[0].len();
        let mut sums = vec![vec![0f64; dim]; centers.len()];
        for (x, &a) in data.iter().zip(&assignments) {
            for (s, &v) in sums[a].iter_mut().zip(x) {
                *s += v as f64;
            }
        }
        let mut movement = 0f64;
        for (c, s) in centers.iter_mut().zip(&sums) {
            let n = s.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n == 0.0 {
                // Empty cluster keeps its center.
                continue;
            }
            let next = vector::normalized_f32(s);
            let shift = c
                .iter()
                .zip(&next)
                .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
                .sum::<f64>()
                .sqrt();
            movement = movement.max(shift);
            *c = next;
        }
        if movement < CONVERGENCE_TOLERANCE {
            trace.push(assign(&data, &centers, &mut assignments));
            break;
        }
    }
    KMeansResult {
        centers,
        assignments,
        objective_trace: trace,
        iterations,
    }
}

/// Assigns every point to its most similar center (ties: lower index) and
/// returns the summed cosine distance.
fn assign(data: &[Vec<f32>], centers: &[Vec<f32>], out: &mut [usize]) -> f64 {
    let mut total = 0f64;
    for (x, slot) in data.iter().zip(out.iter_mut()) {
        let (best, sim) = nearest(x, centers);
        *slot = best;
        total += 1.0 - sim;
    }
    total
}

fn nearest(x: &[f32], centers: &[Vec<f32>]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let s = vector::dot(x, c);
        if s > best.1 {
            best = (i, s);
        }
    }
    best
}

fn seed_plus_plus(data: &[Vec<f32>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f32>> {
    let first = rng.random_range(0..data.len());
    let mut centers = vec![data[first].clone()];
    let mut dist: Vec<f64> = data
        .iter()
        .map(|x| (1.0 - vector::dot(x, &centers[0])).max(0.0))
        .collect();
    while centers.len() < k {
        let weights: Vec<f64> = dist.iter().map(|d| d * d).collect();
        let total: f64 = weights.iter().sum();
        if total.is_nan() || total <= 0.0 {
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = data.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            if target < *w {
                pick = i;
                break;
            }
            target -= w;
        }
        // Guard against landing on a zero-weight tail through rounding.
        if weights[pick] == 0.0 {
            pick = weights.iter().rposition(|&w| w > 0.0).unwrap();
        }
        let c = data[pick].clone();
        for (d, x) in dist.iter_mut().zip(data) {
            *d = d.min((1.0 - vector::dot(x, &c)).max(0.0));
        }
        centers.push(c);
    }
    centers
}

fn unit(v: &[f32]) -> Vec<f32> {
    let mut u = v.to_vec();
    vector::normalize_in_place(&mut u);
    u
}

/// Representative features for one instance: the distinct normalized views
/// when there are at most `k` of them, K-Means centers otherwise.
pub fn build_representatives(view_features: &[Vec<f32>], k: usize, seed: u64) -> Vec<Vec<f32>> {
    assert!(k >= 1 && !view_features.is_empty());
    let mut distinct: Vec<Vec<f32>> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for f in view_features {
        let u = unit(f);
        let key: Vec<u32> = u.iter().map(|x| x.to_bits()).collect();
        if seen.insert(key) {
            distinct.push(u);
        }
    }
    if distinct.len() <= k {
        return distinct;
    }
    spherical_kmeans(&distinct, k, seed).centers
}
