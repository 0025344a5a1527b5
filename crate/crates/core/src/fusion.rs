//! Two-channel fusion: alternating diffusion, the diffusion map of the common
//! metric, bipartite co-clustering and the common feature.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::dmap::{right_eigenpairs, CONNECTIVITY_TOL};
use crate::geometry::{affinity, diffusion_map, transition, DiagonalPolicy, DimSelect, Embedding, TransitionMatrix};

/// `A_xy = A_x A_y`, first channel on the left.
#[derive(Debug, Clone, PartialEq)]
pub struct AlternatingOperator {
    pub a: DMatrix<f64>,
}

/// `M = [[0, W_x W_y], [W_y W_x, 0]]` with its degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteOperator {
    pub m: DMatrix<f64>,
    pub degree: DVector<f64>,
    /// Points per channel.
    pub n: usize,
}

pub fn alternating_diffusion(ax: &TransitionMatrix, ay: &TransitionMatrix) -> Result<AlternatingOperator> {
    alternating_product(&ax.a, &ay.a)
}

pub fn alternating_product(ax: &DMatrix<f64>, ay: &DMatrix<f64>) -> Result<AlternatingOperator> {
    if ax.shape() != ay.shape() || !ax.is_square() {
        return Err(Error::Dimension(format!(
            "transition matrices are {:?} and {:?}",
            ax.shape(),
            ay.shape()
        )));
    }
    Ok(AlternatingOperator { a: ax * ay })
}

/// `dist(i, j) = |row_i(A_xy) - row_j(A_xy)|_2`.
pub fn common_metric(op: &AlternatingOperator) -> DMatrix<f64> {
    let a = &op.a;
    let n = a.nrows();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| {
                    let s: f64 = (0..n).map(|k| (a[(i, k)] - a[(j, k)]).powi(2)).sum();
                    s.sqrt()
                })
                .collect()
        })
        .collect();
    let mut d = DMatrix::zeros(n, n);
    for (i, r) in upper.iter().enumerate() {
        for (off, &v) in r.iter().enumerate() {
            d[(i, i + 1 + off)] = v;
            d[(i + 1 + off, i)] = v;
        }
    }
    d
}

/// Diffusion map with the common metric inside the Gaussian kernel.
pub fn adm_embed(
    common_dist: &DMatrix<f64>,
    eps_quantile: f64,
    diagonal: DiagonalPolicy,
    t: f64,
    dims: DimSelect,
) -> Result<Embedding> {
    let d2 = common_dist.map(|v| v * v);
    let w = affinity(&d2, eps_quantile, diagonal)?;
    diffusion_map(&transition(&w)?, t, dims)
}

/// Builds the bipartite operator. The lower block is stored as the exact
/// transpose of `W_x W_y`, which it equals for symmetric affinities.
pub fn multiview_operator(wx: &DMatrix<f64>, wy: &DMatrix<f64>) -> Result<BipartiteOperator> {
    if wx.shape() != wy.shape() || !wx.is_square() {
        return Err(Error::Dimension(format!("affinities are {:?} and {:?}", wx.shape(), wy.shape())));
    }
    crate::geometry::lmd::check_symmetric(wx, 1e-12)?;
    crate::geometry::lmd::check_symmetric(wy, 1e-12)?;
    let n = wx.nrows();
    let xy = wx * wy;
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, n), (n, n)).copy_from(&xy);
    m.view_mut((n, 0), (n, n)).copy_from(&xy.transpose());
    let degree = DVector::from_iterator(2 * n, m.row_iter().map(|r| r.sum()));
    if let Some(v) = degree.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::IsolatedVertex { vertex: v });
    }
    Ok(BipartiteOperator { m, degree, n })
}

/// Nontrivial right eigenvectors of `D^-1 M`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoclusterVectors {
    /// `2J x d_tilde`; rows `0..J` are channel x, rows `J..2J` channel y.
    pub q: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
}

pub fn cocluster_eigvecs(op: &BipartiteOperator, d_tilde: usize) -> Result<CoclusterVectors> {
    let n2 = op.m.nrows();
    if d_tilde + 1 > n2 {
        return Err(Error::InvalidInput(format!("{d_tilde} eigenvectors requested from {n2} vertices")));
    }
    let (values, phi) = right_eigenpairs(&op.m, &op.degree)?;
    if values[1] >= 1.0 - CONNECTIVITY_TOL {
        return Err(Error::Disconnected { lambda2: values[1] });
    }
    Ok(CoclusterVectors {
        q: phi.columns(1, d_tilde).into_owned(),
        eigenvalues: values[1..=d_tilde].to_vec(),
    })
}

/// Which side the given clusters live on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Clusters of channel x induce clusters of channel y.
    XToY,
    /// Clusters of channel y induce clusters of channel x.
    YToX,
}

/// Assigns each vertex of the other side to the cluster with the largest
/// summed affinity; ties go to the lowest cluster index.
pub fn induce_clusters(op: &BipartiteOperator, clusters: &[usize], direction: Side) -> Result<Vec<usize>> {
    let n = op.n;
    if clusters.len() != n {
        return Err(Error::Dimension(format!("{} labels for {n} vertices", clusters.len())));
    }
    let k = clusters.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    clusters.iter().for_each(|&c| sizes[c] += 1);
    if let Some(c) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::InvalidInput(format!("cluster {c} is empty")));
    }
    let out = (0..n)
        .map(|v| {
            let mut score = vec![0.0; k];
            for (u, &c) in clusters.iter().enumerate() {
                score[c] += match direction {
                    Side::XToY => op.m[(u, n + v)],
                    Side::YToX => op.m[(v, n + u)],
                };
            }
            let mut best = 0;
            for c in 1..k {
                if score[c] > score[best] {
                    best = c;
                }
            }
            best
        })
        .collect();
    Ok(out)
}

/// `cut(U1, U2)` for a bipartition of all `2J` vertices (`true` = U1).
pub fn cut(m: &DMatrix<f64>, in_first: &[bool]) -> f64 {
    let mut s = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if in_first[i] && !in_first[j] {
                s += m[(i, j)];
            }
        }
    }
    s
}

/// Sum of degrees over the vertices with `in_first == side`.
pub fn weight(degree: &DVector<f64>, in_first: &[bool], side: bool) -> f64 {
    degree.iter().zip(in_first).filter(|(_, &f)| f == side).map(|(d, _)| d).sum()
}

/// `cut/weight(U1) + cut/weight(U2)`.
pub fn normalized_cut(op: &BipartiteOperator, in_first: &[bool]) -> f64 {
    let c = cut(&op.m, in_first);
    c / weight(&op.degree, in_first, true) + c / weight(&op.degree, in_first, false)
}

/// Generalized partition vector: `+sqrt(w2/w1)` on U1, `-sqrt(w1/w2)` on U2.
pub fn partition_vector(op: &BipartiteOperator, in_first: &[bool]) -> DVector<f64> {
    let w1 = weight(&op.degree, in_first, true);
    let w2 = weight(&op.degree, in_first, false);
    let (a, b) = ((w2 / w1).sqrt(), -(w1 / w2).sqrt());
    DVector::from_iterator(in_first.len(), in_first.iter().map(|&f| if f { a } else { b }))
}

/// `q^T (D - M) q / q^T D q`.
pub fn rayleigh_quotient(op: &BipartiteOperator, q: &DVector<f64>) -> f64 {
    let dq = q.component_mul(&op.degree);
    let num = q.dot(&dq) - q.dot(&(&op.m * q));
    num / q.dot(&dq)
}

/// Rows `v_j = [psi_2(j).., q_2(j).., q_2(J+j)..]` from raw eigenvectors.
pub fn common_feature(psi: &Embedding, q: &CoclusterVectors, d_hat: usize, d_tilde: usize) -> Result<DMatrix<f64>> {
    let n = psi.vectors.nrows();
    if q.q.nrows() != 2 * n {
        return Err(Error::Dimension(format!(
            "{} embedding rows but {} co-clustering rows",
            n,
            q.q.nrows()
        )));
    }
    if psi.vectors.ncols() < d_hat || q.q.ncols() < d_tilde {
        return Err(Error::Dimension(format!(
            "need {d_hat} + {d_tilde} eigenvectors, have {} + {}",
            psi.vectors.ncols(),
            q.q.ncols()
        )));
    }
    let mut v = DMatrix::zeros(n, d_hat + 2 * d_tilde);
    v.view_mut((0, 0), (n, d_hat)).copy_from(&psi.vectors.columns(0, d_hat));
    v.view_mut((0, d_hat), (n, d_tilde)).copy_from(&q.q.view((0, 0), (n, d_tilde)));
    v.view_mut((0, d_hat + d_tilde), (n, d_tilde)).copy_from(&q.q.view((n, 0), (n, d_tilde)));
    Ok(v)
}
