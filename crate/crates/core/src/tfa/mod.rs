//! Short-time Fourier transform, frequency reassignment, synchrosqueezing and
//! per-epoch band features.

pub mod export;
pub mod features;
pub mod sst;
pub mod stft;

pub use features::{band_features, features_from_bin_energy, Band, BandSet, EpochFeature, FeatureExtractor};
pub use sst::{reassign_freq, synchrosqueeze, SynchroSpectrum, DISCARD};
pub use stft::{stft, stft_pair, StftEngine, StftGrid, StftParams, Window};
