use serde::{Deserialize, Serialize};

use super::codebook::Codebook;
use super::viterbi::{viterbi, ViterbiTrace};
use crate::error::{Error, Result};
use crate::stage::SleepStage;

const S: usize = SleepStage::COUNT;

/// Row-normalizes counts after adding `kappa` to every cell. A row without
/// any mass becomes uniform.
fn normalize(counts: &[Vec<f64>], kappa: f64) -> Vec<Vec<f64>> {
    counts
        .iter()
        .map(|row| {
            let total: f64 = row.iter().map(|c| c + kappa).sum();
            if total > 0.0 {
                row.iter().map(|c| (c + kappa) / total).collect()
            } else {
                vec![1.0 / row.len() as f64; row.len()]
            }
        })
        .collect()
}

/// Transition probabilities `m_ij` from labelled sequences. Counts are pooled
/// over sequences but never across a sequence boundary.
pub fn estimate_transitions(sequences: &[Vec<SleepStage>], kappa: f64) -> Vec<Vec<f64>> {
    let mut counts = vec![vec![0.0; S]; S];
    for seq in sequences {
        for w in seq.windows(2) {
            counts[w[0].index()][w[1].index()] += 1.0;
        }
    }
    normalize(&counts, kappa)
}

/// Emission probabilities `e_j(k)` from aligned stage and symbol sequences.
pub fn estimate_emissions(
    stages: &[Vec<SleepStage>],
    symbols: &[Vec<usize>],
    codebook_size: usize,
    kappa: f64,
) -> Result<Vec<Vec<f64>>> {
    if stages.len() != symbols.len() {
        return Err(Error::Dimension(format!("{} stage sequences but {} symbol sequences", stages.len(), symbols.len())));
    }
    let mut counts = vec![vec![0.0; codebook_size]; S];
    for (i, (st, sy)) in stages.iter().zip(symbols).enumerate() {
        if st.len() != sy.len() {
            return Err(Error::Dimension(format!(
                "sequence {i}: {} stages but {} symbols",
                st.len(),
                sy.len()
            )));
        }
        for (s, &o) in st.iter().zip(sy) {
            if o >= codebook_size {
                return Err(Error::InvalidInput(format!("symbol {o} outside a codebook of size {codebook_size}")));
            }
            counts[s.index()][o] += 1.0;
        }
    }
    Ok(normalize(&counts, kappa))
}

/// Discrete HMM over the five stages with quantized observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmModel {
    /// Stage the recording is assumed to start from.
    pub init_state: SleepStage,
    /// 5x5 row-stochastic, rows and columns in stage order.
    pub trans: Vec<Vec<f64>>,
    /// 5 x |codebook| row-stochastic.
    pub emis: Vec<Vec<f64>>,
    pub codebook: Codebook,
    pub smoothing: f64,
    /// Free-form record of the settings that produced the model.
    #[serde(default)]
    pub config: serde_json::Value,
}

impl HmmModel {
    pub fn validate(&self) -> Result<()> {
        let k = self.codebook.size();
        let ok_rows = |m: &Vec<Vec<f64>>, cols: usize| {
            m.len() == S
                && m.iter().all(|r| {
                    r.len() == cols && r.iter().all(|&p| p >= 0.0 && p.is_finite()) && (r.iter().sum::<f64>() - 1.0).abs() < 1e-9
                })
        };
        if !ok_rows(&self.trans, S) {
            return Err(Error::InvalidInput("transition matrix must be 5x5 row-stochastic".into()));
        }
        if !ok_rows(&self.emis, k) {
            return Err(Error::InvalidInput(format!("emission matrix must be 5x{k} row-stochastic")));
        }
        Ok(())
    }

    /// Quantizes `features` and returns the Viterbi trace.
    pub fn decode(&self, features: &[Vec<f64>]) -> Result<ViterbiTrace> {
        let obs = self.codebook.quantize_all(features)?;
        viterbi(self, &obs)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format {
            context: "model".into(),
            msg: e.to_string(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: HmmModel = serde_json::from_str(text).map_err(|e| Error::Format {
            context: "model".into(),
            msg: e.to_string(),
        })?;
        m.validate()?;
        Ok(m)
    }
}
