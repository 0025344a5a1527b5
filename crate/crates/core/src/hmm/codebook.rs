use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative split perturbation.
pub const SPLIT_DELTA: f64 = 1e-3;
/// Relative distortion change that ends a refinement round.
pub const CONVERGENCE_TOL: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 100;

/// Vector-quantization codebook. Symbols are 0-based centroid indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub centroids: Vec<Vec<f64>>,
    /// Mean squared quantization error after each splitting round, starting
    /// with the single-centroid codebook.
    #[serde(default)]
    pub distortion_history: Vec<f64>,
}

impl Codebook {
    pub fn size(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, |c| c.len())
    }

    /// Index of the nearest centroid; ties go to the lowest index.
    pub fn quantize(&self, v: &[f64]) -> Result<usize> {
        if v.len() != self.dim() {
            return Err(Error::Dimension(format!("vector of length {} for codebook of dimension {}", v.len(), self.dim())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("cannot quantize a non-finite vector".into()));
        }
        Ok(nearest(&self.centroids, v).0)
    }

    pub fn quantize_all(&self, vs: &[Vec<f64>]) -> Result<Vec<usize>> {
        vs.iter().map(|v| self.quantize(v)).collect()
    }

    /// Mean squared distance of `points` to their nearest centroid.
    pub fn distortion(&self, points: &[Vec<f64>]) -> f64 {
        points.iter().map(|p| nearest(&self.centroids, p).1).sum::<f64>() / points.len().max(1) as f64
    }
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[Vec<f64>], v: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq(c, v);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn mean(points: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim];
    for p in points {
        for (a, b) in m.iter_mut().zip(p) {
            *a += b;
        }
    }
    m.iter_mut().for_each(|a| *a /= points.len() as f64);
    m
}

/// Lloyd iterations from `centroids`; returns the final mean distortion.
fn refine(points: &[Vec<f64>], centroids: &mut [Vec<f64>]) -> f64 {
    let dim = centroids[0].len();
    let mut prev = f64::INFINITY;
    let mut assign = vec![0usize; points.len()];
    let mut dist = vec![0.0; points.len()];
    for _ in 0..MAX_ITERATIONS {
        for (i, p) in points.iter().enumerate() {
            let (a, d) = nearest(centroids, p);
            assign[i] = a;
            dist[i] = d;
        }
        let cur = dist.iter().sum::<f64>() / points.len() as f64;
        let mut sums = vec![vec![0.0; dim]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (p, &a) in points.iter().zip(&assign) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut taken: Vec<usize> = Vec::new();
        for c in 0..centroids.len() {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            } else {
                // Re-seed an empty cell at the worst-quantized point not used yet.
                let far = (0..points.len())
                    .filter(|i| !taken.contains(i))
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)));
                if let Some(i) = far {
                    centroids[c] = points[i].clone();
                    dist[i] = 0.0;
                    taken.push(i);
                }
            }
        }
        let converged = cur == 0.0 || (prev - cur) / cur.max(f64::MIN_POSITIVE) < CONVERGENCE_TOL;
        prev = cur;
        if converged && taken.is_empty() {
            break;
        }
    }
    points.iter().map(|p| nearest(centroids, p).1).sum::<f64>() / points.len() as f64
}

/// Linde-Buzo-Gray codebook of `size` (a power of two) centroids.
///
/// Every round splits each centroid `c` into `c + p` and `c - p` with
/// `p_i = delta * r_i * max(|c_i|, std_i)`, where `r_i` are seeded random
/// signs and `std_i` the per-coordinate spread of the data, then refines
/// with nearest-centroid iterations.
pub fn lbg_codebook(points: &[Vec<f64>], size: usize, seed: u64) -> Result<Codebook> {
    if size == 0 || !size.is_power_of_two() {
        return Err(Error::Config(format!("codebook size {size} is not a power of two")));
    }
    if points.len() < size {
        return Err(Error::InvalidInput(format!("codebook size {size} exceeds the {} training vectors", points.len())));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim || p.iter().any(|x| !x.is_finite())) {
        return Err(Error::InvalidInput("training vectors must be finite and of equal length".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let global = mean(points, dim);
    let std: Vec<f64> = (0..dim)
        .map(|i| (points.iter().map(|p| (p[i] - global[i]).powi(2)).sum::<f64>() / points.len() as f64).sqrt())
        .collect();
    let mut centroids = vec![global];
    let mut history = vec![refine(points, &mut centroids)];
    while centroids.len() < size {
        let mut next = Vec::with_capacity(centroids.len() * 2);
        for c in &centroids {
            let p: Vec<f64> = (0..dim)
                .map(|i| {
                    let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                    SPLIT_DELTA * sign * c[i].abs().max(std[i])
                })
                .collect();
            next.push(c.iter().zip(&p).map(|(a, b)| a + b).collect());
            next.push(c.iter().zip(&p).map(|(a, b)| a - b).collect());
        }
        centroids = next;
        history.push(refine(points, &mut centroids));
    }
    Ok(Codebook {
        centroids,
        distortion_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_far_pairs() {
        let pts = vec![vec![0.0, 0.0], vec![0.0, 0.2], vec![10.0, 10.0], vec![10.2, 10.0]];
        let cb = lbg_codebook(&pts, 2, 1).unwrap();
        let mut c = cb.centroids.clone();
        c.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert!((c[0][0] - 0.0).abs() < 1e-12 && (c[0][1] - 0.1).abs() < 1e-12);
        assert!((c[1][0] - 10.1).abs() < 1e-12 && (c[1][1] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn size_one_is_mean() {
        let pts = vec![vec![1.0], vec![2.0], vec![6.0]];
        let cb = lbg_codebook(&pts, 1, 0).unwrap();
        assert_eq!(cb.centroids, vec![vec![3.0]]);
    }

    #[test]
    fn invalid_sizes() {
        let pts = vec![vec![1.0]; 3];
        assert!(lbg_codebook(&pts, 4, 0).is_err());
        assert!(lbg_codebook(&pts, 3, 0).is_err());
    }

    #[test]
    fn distortion_never_increases_across_rounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec<f64>> = (0..300).map(|_| (0..3).map(|_| rng.gen::<f64>()).collect()).collect();
        let cb = lbg_codebook(&pts, 16, 9).unwrap();
        assert_eq!(cb.size(), 16);
        for w in cb.distortion_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn duplicate_points_fill_every_cell() {
        let mut pts = vec![vec![0.0, 0.0]; 10];
        pts.extend(vec![vec![1.0, 1.0]; 2]);
        let cb = lbg_codebook(&pts, 4, 3).unwrap();
        assert!(cb.centroids.iter().all(|c| c.iter().all(|x| x.is_finite())));
    }

    #[test]
    fn quantize_ties_and_exact_hits() {
        let cb = Codebook {
            centroids: vec![vec![0.0], vec![2.0], vec![5.0]],
            distortion_history: vec![],
        };
        assert_eq!(cb.quantize(&[5.0]).unwrap(), 2);
        assert_eq!(cb.quantize(&[1.0]).unwrap(), 0);
        assert!(cb.quantize(&[f64::NAN]).is_err());
        assert!(cb.quantize(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn quantize_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cb = Codebook {
            centroids: (0..8).map(|_| (0..4).map(|_| rng.gen::<f64>()).collect()).collect(),
            distortion_history: vec![],
        };
        for _ in 0..200 {
            let v: Vec<f64> = (0..4).map(|_| rng.gen::<f64>()).collect();
            let d: Vec<f64> = cb.centroids.iter().map(|c| sq(c, &v)).collect();
            let want = (0..8).fold(0, |b, i| if d[i] < d[b] { i } else { b });
            assert_eq!(cb.quantize(&v).unwrap(), want);
        }
    }
}
