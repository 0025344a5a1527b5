use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Eigenvalues below this fraction of the largest are treated as zero.
pub const PINV_FLOOR: f64 = 1e-10;

/// Per-point neighbourhood covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalCovariances {
    pub gammas: Vec<DMatrix<f64>>,
    pub neighbors: Vec<Vec<usize>>,
    pub k_nb: usize,
}

fn row(u: &DMatrix<f64>, i: usize) -> DVector<f64> {
    u.row(i).transpose()
}

fn sq_dist(u: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    u.row(i).iter().zip(u.row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Indices of the `k` nearest rows to row `j` (excluding `j`), ties by index.
pub fn nearest_neighbors(u: &DMatrix<f64>, j: usize, k: usize) -> Vec<usize> {
    let mut cand: Vec<(f64, usize)> = (0..u.nrows())
        .filter(|&i| i != j)
        .map(|i| (sq_dist(u, i, j), i))
        .collect();
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cand.truncate(k);
    cand.into_iter().map(|(_, i)| i).collect()
}

/// Neighbour count for ratio `alpha`: `round(alpha * J)`.
pub fn neighbor_count(j: usize, alpha: f64) -> usize {
    (alpha * j as f64).round() as usize
}

/// Covariances over the `round(alpha J)` Euclidean nearest neighbours of
/// every row of `u` (rows are points).
pub fn local_covariances(u: &DMatrix<f64>, alpha: f64) -> Result<LocalCovariances> {
    let j = u.nrows();
    if j < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 points, got {j}")));
    }
    let k = neighbor_count(j, alpha);
    if k < 2 || k > j - 1 {
        return Err(Error::InvalidInput(format!(
            "neighbour count round({alpha} * {j}) = {k} must lie in [2, {}]",
            j - 1
        )));
    }
    let neighbors: Vec<Vec<usize>> = (0..j).into_par_iter().map(|i| nearest_neighbors(u, i, k)).collect();
    covariances_with_neighbors(u, neighbors)
}

/// Covariances over given neighbourhoods.
pub fn covariances_with_neighbors(u: &DMatrix<f64>, neighbors: Vec<Vec<usize>>) -> Result<LocalCovariances> {
    if neighbors.len() != u.nrows() {
        return Err(Error::Dimension(format!(
            "{} neighbourhoods for {} points",
            neighbors.len(),
            u.nrows()
        )));
    }
    let k = neighbors.first().map_or(0, |n| n.len());
    if k == 0 || neighbors.iter().any(|n| n.len() != k) {
        return Err(Error::InvalidInput("neighbourhoods must be nonempty and of equal size".into()));
    }
    let p = u.ncols();
    let gammas = neighbors
        .par_iter()
        .enumerate()
        .map(|(j, nb)| {
            let uj = row(u, j);
            let mut g = DMatrix::zeros(p, p);
            for &i in nb {
                let diff = row(u, i) - &uj;
                g.ger(1.0, &diff, &diff, 1.0);
            }
            g / k as f64
        })
        .collect();
    Ok(LocalCovariances { gammas, neighbors, k_nb: k })
}

pub(crate) fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in i + 1..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn check_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("{}x{} matrix is not square", m.nrows(), m.ncols())));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let asym = max_asymmetry(m);
    if asym > rel_tol * scale {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Rank-`d` truncated pseudo-inverse of a symmetric positive semidefinite matrix.
pub fn truncated_pinv(g: &DMatrix<f64>, d: usize) -> Result<DMatrix<f64>> {
    check_symmetric(g, 1e-10)?;
    let n = g.nrows();
    if d > n {
        return Err(Error::InvalidInput(format!("rank {d} exceeds dimension {n}")));
    }
    let eig = SymmetricEigen::new(g.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = order.first().map_or(0.0, |&i| eig.eigenvalues[i]);
    let mut out = DMatrix::zeros(n, n);
    if !(top > 0.0) {
        return Ok(out);
    }
    for &i in order.iter().take(d) {
        let l = eig.eigenvalues[i];
        if l <= PINV_FLOOR * top {
            break;
        }
        let v = eig.eigenvectors.column(i);
        out.ger(1.0 / l, &v, &v, 1.0);
    }
    Ok(out)
}

/// Squared local Mahalanobis distances
/// `d2(i,j) = 1/2 (u_i - u_j)^T (P_i + P_j) (u_i - u_j)` with `P` the rank-`d`
/// truncated pseudo-inverse of each local covariance.
pub fn local_md_sq(u: &DMatrix<f64>, cov: &LocalCovariances, d: usize) -> Result<DMatrix<f64>> {
    let n = u.nrows();
    if cov.gammas.len() != n {
        return Err(Error::Dimension(format!("{} covariances for {n} points", cov.gammas.len())));
    }
    let pinvs = cov
        .gammas
        .par_iter()
        .map(|g| truncated_pinv(g, d))
        .collect::<Result<Vec<_>>>()?;
    let zero = cov.gammas.iter().filter(|g| g.amax() == 0.0).count();
    if zero > 0 && d > 0 {
        log::warn!("{zero} local covariance(s) are zero; their side contributes nothing to the distance");
    }
    let rows: Vec<DVector<f64>> = (0..n).map(|i| row(u, i)).collect();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| {
                    let diff = &rows[i] - &rows[j];
                    let a = diff.dot(&(&pinvs[i] * &diff));
                    let b = diff.dot(&(&pinvs[j] * &diff));
                    (0.5 * (a + b)).max(0.0)
                })
                .collect()
        })
        .collect();
    let mut out = DMatrix::zeros(n, n);
    for (i, r) in upper.iter().enumerate() {
        for (off, &v) in r.iter().enumerate() {
            out[(i, i + 1 + off)] = v;
            out[(i + 1 + off, i)] = v;
        }
    }
    Ok(out)
}

/// Squared Euclidean distances between rows.
pub fn euclidean_sq(u: &DMatrix<f64>) -> DMatrix<f64> {
    let n = u.nrows();
    DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { sq_dist(u, i, j) })
}
