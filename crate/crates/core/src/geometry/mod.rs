//! Local Mahalanobis distance, Gaussian affinity, random walks and diffusion maps.

pub mod dmap;
pub mod kernel;
pub mod lmd;

pub use dmap::{diffusion_distance, diffusion_map, eig_power, DimSelect, Embedding};
pub use kernel::{affinity, affinity_with_eps, quantile, transition, transition_from, AffinityMatrix, DiagonalPolicy, TransitionMatrix};
pub use lmd::{covariances_with_neighbors, euclidean_sq, local_covariances, local_md_sq, nearest_neighbors, neighbor_count, truncated_pinv, LocalCovariances};
