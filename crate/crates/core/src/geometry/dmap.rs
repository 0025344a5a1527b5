use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::kernel::TransitionMatrix;
use super::lmd::check_symmetric;
use crate::error::{Error, Result};

/// A second eigenvalue this close to 1 means the graph is disconnected.
pub const CONNECTIVITY_TOL: f64 = 1e-9;

/// How many nontrivial coordinates to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum DimSelect {
    Fixed { d: usize },
    /// Largest `l` with `lambda_l^t > delta`, at most `max`.
    Threshold { delta: f64, max: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    /// Row `j` holds `lambda_l^t phi_l(j)` for `l = 2..d+1`.
    pub coords: DMatrix<f64>,
    /// `lambda_2 .. lambda_{d+1}`.
    pub eigenvalues: Vec<f64>,
    /// Unscaled right eigenvectors `phi_2 .. phi_{d+1}` as columns.
    pub vectors: DMatrix<f64>,
    pub t: f64,
}

impl Embedding {
    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }
}

/// Eigenpairs of `D^-1 W` through `D^-1/2 W D^-1/2 = O L O^T`, returned in
/// descending eigenvalue order as (eigenvalues, `D^-1/2 O`).
///
/// Each eigenvector is signed so its largest-magnitude entry is positive.
/// Exactly equal eigenvalues are ordered by the first differing coordinate,
/// larger first; inside an eigenspace the basis is otherwise arbitrary.
pub(crate) fn right_eigenpairs(w: &DMatrix<f64>, degree: &DVector<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    check_symmetric(w, 1e-10)?;
    let n = w.nrows();
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let s = DMatrix::from_fn(n, n, |i, j| inv_sqrt[i] * w[(i, j)] * inv_sqrt[j]);
    // exact symmetry for the solver
    let s = (&s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    let mut vecs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|c| {
            let col = eig.eigenvectors.column(c);
            let mut v: Vec<f64> = col.iter().copied().collect();
            let big = v
                .iter()
                .enumerate()
                .fold((0usize, 0.0f64), |acc, (i, x)| if x.abs() > acc.1 { (i, x.abs()) } else { acc })
                .0;
            if v[big] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            (eig.eigenvalues[c], v)
        })
        .collect();
    vecs.sort_by(|a, b| match b.0.total_cmp(&a.0) {
        Ordering::Equal => {
            let first = a.1.iter().zip(&b.1).find(|(x, y)| x != y);
            first.map_or(Ordering::Equal, |(x, y)| y.total_cmp(x))
        }
        o => o,
    });
    let values = vecs.iter().map(|p| p.0).collect();
    let phi = DMatrix::from_fn(n, n, |i, c| inv_sqrt[i] * vecs[c].1[i]);
    Ok((values, phi))
}

/// `lambda^t`, with the sign kept for negative eigenvalues and non-integer `t`.
pub fn eig_power(l: f64, t: f64) -> f64 {
    if t.fract() == 0.0 && t.abs() < i32::MAX as f64 {
        l.powi(t as i32)
    } else {
        l.signum() * l.abs().powf(t)
    }
}

/// Diffusion map of the random walk `a` at diffusion time `t`.
pub fn diffusion_map(a: &TransitionMatrix, t: f64, dims: DimSelect) -> Result<Embedding> {
    let n = a.w.nrows();
    let (values, phi) = right_eigenpairs(&a.w, &a.degree)?;
    if n < 2 {
        return Err(Error::InvalidInput("diffusion map needs at least 2 points".into()));
    }
    if values[1] >= 1.0 - CONNECTIVITY_TOL {
        return Err(Error::Disconnected { lambda2: values[1] });
    }
    if (values[0] - 1.0).abs() > 1e-8 {
        log::warn!("top eigenvalue is {} rather than 1", values[0]);
    }
    let d = match dims {
        DimSelect::Fixed { d } => {
            if d + 1 > n {
                return Err(Error::InvalidInput(format!("{d} coordinates requested from {n} points")));
            }
            d
        }
        DimSelect::Threshold { delta, max } => values[1..]
            .iter()
            .take(max.min(n - 1))
            .take_while(|&&l| eig_power(l, t) > delta)
            .count(),
    };
    let eigenvalues: Vec<f64> = values[1..=d].to_vec();
    let vectors = phi.columns(1, d).into_owned();
    let mut coords = vectors.clone();
    for (c, &l) in eigenvalues.iter().enumerate() {
        coords.column_mut(c).scale_mut(eig_power(l, t));
    }
    Ok(Embedding { coords, eigenvalues, vectors, t })
}

/// Diffusion distance between points `i` and `j`.
pub fn diffusion_distance(emb: &Embedding, i: usize, j: usize) -> f64 {
    (emb.coords.row(i) - emb.coords.row(j)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::kernel::{affinity, transition, transition_from, DiagonalPolicy};
    use crate::geometry::lmd::euclidean_sq;

    #[test]
    fn two_nodes() {
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 0.7, 0.7, 0.0]);
        let t = transition_from(&w).unwrap();
        let e = diffusion_map(&t, 1.0, DimSelect::Fixed { d: 1 }).unwrap();
        assert!((e.eigenvalues[0] + 1.0).abs() < 1e-12);
        let v = e.vectors.column(0);
        assert!((v[0] + v[1]).abs() < 1e-12);
        let want = 2.0 * e.eigenvalues[0].abs() * v[0].abs();
        assert!((diffusion_distance(&e, 0, 1) - want).abs() < 1e-12);
        assert_eq!(diffusion_distance(&e, 1, 1), 0.0);
    }

    #[test]
    fn two_nodes_with_unit_diagonal() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let e = diffusion_map(&transition_from(&w).unwrap(), 2.0, DimSelect::Fixed { d: 1 }).unwrap();
        assert!((e.eigenvalues[0] - 1.0 / 3.0).abs() < 1e-12);
        let v = e.vectors.column(0);
        assert!((v[0] + v[1]).abs() < 1e-12);
        let want = 2.0 * (1.0f64 / 3.0).powi(2) * v[0].abs();
        assert!((diffusion_distance(&e, 0, 1) - want).abs() < 1e-12);
    }

    #[test]
    fn disconnected_graph_rejected() {
        let w = DMatrix::from_row_slice(
            4,
            4,
            &[0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0],
        );
        let err = diffusion_map(&transition_from(&w).unwrap(), 1.0, DimSelect::Fixed { d: 1 }).unwrap_err();
        assert!(matches!(err, Error::Disconnected { .. }));
    }

    #[test]
    fn right_eigenvectors_of_walk() {
        let pts: Vec<f64> = (0..25).map(|i| (i as f64 * 0.37).sin() + i as f64 * 0.1).collect();
        let u = DMatrix::from_column_slice(25, 1, &pts);
        let w = affinity(&euclidean_sq(&u), 0.2, DiagonalPolicy::Zero).unwrap();
        let t = transition(&w).unwrap();
        let e = diffusion_map(&t, 1.0, DimSelect::Fixed { d: 5 }).unwrap();
        for c in 0..5 {
            let v = e.vectors.column(c);
            let av = &t.a * v;
            assert!((av - v * e.eigenvalues[c]).amax() < 1e-10);
        }
        for w in e.eigenvalues.windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert!(e.eigenvalues[0] < 1.0);
    }

    #[test]
    fn threshold_mode_counts_large_eigenvalues() {
        let pts: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let u = DMatrix::from_column_slice(30, 1, &pts);
        let t = transition(&affinity(&euclidean_sq(&u), 0.1, DiagonalPolicy::Zero).unwrap()).unwrap();
        let full = diffusion_map(&t, 1.0, DimSelect::Fixed { d: 29 }).unwrap();
        let sel = diffusion_map(&t, 1.0, DimSelect::Threshold { delta: 0.5, max: 29 }).unwrap();
        let want = full.eigenvalues.iter().take_while(|&&l| l > 0.5).count();
        assert_eq!(sel.dim(), want);
        assert!(want > 0 && want < 29);
    }
}
