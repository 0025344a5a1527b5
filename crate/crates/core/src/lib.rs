//! Intrinsic geometry of sleep dynamics from one or two EEG channels.
//!
//! The crate is organised along the processing chain:
//!
//! - [`ingest`]: EDF/EDF+ recordings, hypnograms, 30 s epoch segmentation.
//! - [`tfa`]: STFT, frequency reassignment, synchrosqueezed spectrogram and
//!   the 10-dim band feature of every epoch.
//! - [`geometry`]: local Mahalanobis distance, Gaussian affinity, diffusion maps.
//! - [`fusion`]: alternating diffusion and bipartite co-clustering of two channels.
//! - [`hmm`]: LBG codebook, count estimators and Viterbi decoding.
//! - [`eval`]: confusion matrices, metrics, class balancing, cross validation.
//! - [`pipeline`]: configuration, orchestration and artifact export.
//! - [`synth`]: a synthetic polysomnography generator with known ground truth.

pub mod error;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod hmm;
pub mod ingest;
pub mod pipeline;
pub mod stage;
pub mod synth;
pub mod tfa;

pub use error::{Error, ErrorKind, Result};
pub use stage::SleepStage;
