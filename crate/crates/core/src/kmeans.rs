//! Lloyd's K-means with k-means++ seeding, plus the min-max scaling used to
//! put mixed-unit features on a common footing.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

pub const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KMeansError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} exceeds the {n} points available")]
    TooManyClusters { k: usize, n: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeans<T> {
    pub centers: Vec<Vec<T>>,
    pub assignment: Vec<usize>,
    pub inertia: T,
    pub iterations: usize,
}

fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest center; ties go to the lowest index.
pub fn nearest<T: Real>(centers: &[Vec<T>], p: &[T]) -> (usize, T) {
    let mut best = (0, sq_dist(&centers[0], p));
    for (j, c) in centers.iter().enumerate().skip(1) {
        let d = sq_dist(c, p);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn seed_centers<T: Real>(points: &[Vec<T>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<T>> {
    let mut centers = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut d2: Vec<T> = points.iter().map(|p| sq_dist(&centers[0], p)).collect();
    while centers.len() < k {
        let total: T = d2.iter().copied().sum();
        let next = if total > T::zero() {
            let mut target = T::lit(rng.gen::<f64>()) * total;
            let mut pick = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.gen_range(0..points.len())
        };
        centers.push(points[next].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(&centers[centers.len() - 1], p));
        }
    }
    centers
}

/// Runs Lloyd's iterations until the assignment stops changing or
/// `max_iterations` is reached. A cluster that loses all its points keeps
/// its previous center.
pub fn kmeans<T: Real>(points: &[Vec<T>], k: usize, seed: u64, max_iterations: usize) -> Result<KMeans<T>, KMeansError> {
    if k == 0 {
        return Err(KMeansError::ZeroK);
    }
    if k > points.len() {
        return Err(KMeansError::TooManyClusters { k, n: points.len() });
    }
    let dim = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_centers(points, k, &mut rng);
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(&centers, p).0).collect();
    let mut iterations = 0;
    while iterations < max_iterations {
        iterations += 1;
        let mut sums = vec![vec![T::zero(); dim]; k];
        let mut sizes = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            sizes[a] += 1;
            for (s, &v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if sizes[j] > 0 {
                let n = T::from_count(sizes[j]);
                centers[j] = sums[j].iter().map(|&s| s / n).collect();
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(&centers, p).0).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    let inertia = points.iter().zip(&assignment).map(|(p, &a)| sq_dist(&centers[a], p)).sum();
    Ok(KMeans { centers, assignment, inertia, iterations })
}

/// Rescales every column to `[0, 1]`; constant columns map to 0.
pub fn min_max_scale<T: Real>(points: &mut [Vec<T>]) {
    let Some(first) = points.first() else { return };
    for c in 0..first.len() {
        let lo = points.iter().map(|p| p[c]).fold(T::infinity(), T::min);
        let hi = points.iter().map(|p| p[c]).fold(T::neg_infinity(), T::max);
        let span = hi - lo;
        for p in points.iter_mut() {
            p[c] = if span > T::zero() { (p[c] - lo) / span } else { T::zero() };
        }
    }
}
