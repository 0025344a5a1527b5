//! Vector quantization, count-based HMM estimation and Viterbi decoding.

pub mod codebook;
pub mod model;
pub mod viterbi;

pub use codebook::{lbg_codebook, Codebook};
pub use model::{estimate_emissions, estimate_transitions, HmmModel};
pub use viterbi::{viterbi, ViterbiTrace};
