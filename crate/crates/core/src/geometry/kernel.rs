use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lmd::check_symmetric;
use crate::error::{Error, Result};

/// Value placed on the diagonal of the affinity matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagonalPolicy {
    #[default]
    Zero,
    One,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    pub w: DMatrix<f64>,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    /// Row-stochastic `D^-1 W`.
    pub a: DMatrix<f64>,
    pub degree: DVector<f64>,
    /// The affinity the walk was built from.
    pub w: DMatrix<f64>,
}

/// Empirical quantile with linear interpolation between order statistics at
/// position `q (n - 1)` of the sorted sample.
pub fn quantile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    values[lo] + frac * (values[hi] - values[lo])
}

/// Off-diagonal entries of the upper triangle.
fn upper_offdiag(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut v = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            v.push(m[(i, j)]);
        }
    }
    v
}

/// Gaussian affinity `exp(-d2 / eps)` with `eps` the `eps_quantile`
/// quantile of the off-diagonal squared distances.
pub fn affinity(dist2: &DMatrix<f64>, eps_quantile: f64, diagonal: DiagonalPolicy) -> Result<AffinityMatrix> {
    check_symmetric(dist2, 1e-12)?;
    if dist2.nrows() < 2 {
        return Err(Error::InvalidInput("affinity needs at least 2 points".into()));
    }
    if !(eps_quantile > 0.0 && eps_quantile <= 1.0) {
        return Err(Error::Config(format!("eps quantile must lie in (0, 1], got {eps_quantile}")));
    }
    if dist2.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidInput("squared distances must be finite and nonnegative".into()));
    }
    if dist2.diagonal().iter().any(|&v| v != 0.0) {
        return Err(Error::InvalidInput("squared distances must have a zero diagonal".into()));
    }
    let eps = quantile(&mut upper_offdiag(dist2), eps_quantile);
    affinity_with_eps(dist2, eps, diagonal)
}

pub fn affinity_with_eps(dist2: &DMatrix<f64>, eps: f64, diagonal: DiagonalPolicy) -> Result<AffinityMatrix> {
    if !(eps > 0.0) {
        return Err(Error::Degenerate(format!(
            "kernel bandwidth is {eps}; too many points coincide"
        )));
    }
    let d = match diagonal {
        DiagonalPolicy::Zero => 0.0,
        DiagonalPolicy::One => 1.0,
    };
    let w = DMatrix::from_fn(dist2.nrows(), dist2.ncols(), |i, j| {
        if i == j {
            d
        } else {
            (-dist2[(i, j)] / eps).exp()
        }
    });
    Ok(AffinityMatrix { w, eps })
}

/// Random walk `A = D^-1 W`.
pub fn transition(w: &AffinityMatrix) -> Result<TransitionMatrix> {
    transition_from(&w.w)
}

pub fn transition_from(w: &DMatrix<f64>) -> Result<TransitionMatrix> {
    let degree = DVector::from_iterator(w.nrows(), w.row_iter().map(|r| r.sum()));
    if let Some(v) = degree.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::IsolatedVertex { vertex: v });
    }
    let mut a = w.clone();
    for (i, mut r) in a.row_iter_mut().enumerate() {
        r /= degree[i];
    }
    Ok(TransitionMatrix { a, degree, w: w.clone() })
}
