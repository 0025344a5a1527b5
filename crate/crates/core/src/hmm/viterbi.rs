use serde::{Deserialize, Serialize};

use super::model::HmmModel;
use crate::error::{Error, Result};
use crate::stage::SleepStage;

const S: usize = SleepStage::COUNT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViterbiTrace {
    /// `nu[t][j]`: best log-probability of any path ending in state `j` at `t`.
    pub nu: Vec<[f64; S]>,
    /// `back[t][j]`: best predecessor of state `j` at `t` (unused at `t = 0`).
    pub back: Vec<[usize; S]>,
    pub path: Vec<SleepStage>,
    /// Joint log-probability of `path` and the observations.
    pub log_prob: f64,
}

/// Most probable stage path in the log domain. The chain starts from
/// `model.init_state` before the first epoch and ends freely. Ties go to the
/// lowest state index.
pub fn viterbi(model: &HmmModel, obs: &[usize]) -> Result<ViterbiTrace> {
    if obs.is_empty() {
        return Err(Error::InvalidInput("empty observation sequence".into()));
    }
    let k = model.codebook.size();
    if let Some(&o) = obs.iter().find(|&&o| o >= k) {
        return Err(Error::InvalidInput(format!("symbol {o} outside a codebook of size {k}")));
    }
    let lt: Vec<Vec<f64>> = model.trans.iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect();
    let le: Vec<Vec<f64>> = model.emis.iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect();
    let s0 = model.init_state.index();

    let mut nu = Vec::with_capacity(obs.len());
    let mut back = Vec::with_capacity(obs.len());
    let mut first = [0.0; S];
    for j in 0..S {
        first[j] = lt[s0][j] + le[j][obs[0]];
    }
    nu.push(first);
    back.push([s0; S]);
    for &o in &obs[1..] {
        let prev = nu.last().unwrap();
        let mut cur = [0.0; S];
        let mut arg = [0usize; S];
        for j in 0..S {
            let mut best = prev[0] + lt[0][j];
            let mut bi = 0;
            for s in 1..S {
                let v = prev[s] + lt[s][j];
                if v > best {
                    best = v;
                    bi = s;
                }
            }
            cur[j] = best + le[j][o];
            arg[j] = bi;
        }
        nu.push(cur);
        back.push(arg);
    }
    let last = nu.last().unwrap();
    let mut state = 0;
    for j in 1..S {
        if last[j] > last[state] {
            state = j;
        }
    }
    let log_prob = last[state];
    let mut idx = vec![0usize; obs.len()];
    for t in (0..obs.len()).rev() {
        idx[t] = state;
        state = back[t][state];
    }
    let path = idx.into_iter().map(SleepStage::from_index).collect::<Option<Vec<_>>>().unwrap();
    Ok(ViterbiTrace { nu, back, path, log_prob })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::codebook::Codebook;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(trans: Vec<Vec<f64>>, emis: Vec<Vec<f64>>) -> HmmModel {
        let k = emis[0].len();
        HmmModel {
            init_state: SleepStage::Awake,
            trans,
            emis,
            codebook: Codebook {
                centroids: (0..k).map(|i| vec![i as f64]).collect(),
                distortion_history: vec![],
            },
            smoothing: 0.0,
            config: serde_json::Value::Null,
        }
    }

    fn random_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
        (0..rows)
            .map(|_| {
                let r: Vec<f64> = (0..cols).map(|_| rng.gen::<f64>() + 1e-3).collect();
                let s: f64 = r.iter().sum();
                r.iter().map(|x| x / s).collect()
            })
            .collect()
    }

    #[test]
    fn uninformative_emissions_follow_transitions() {
        let mut trans = vec![vec![0.05; 5]; 5];
        trans[0] = vec![0.1, 0.1, 0.6, 0.1, 0.1];
        trans[2] = vec![0.05, 0.05, 0.05, 0.8, 0.05];
        trans[3] = vec![0.05, 0.05, 0.05, 0.8, 0.05];
        for r in [1usize, 4] {
            trans[r] = vec![0.2; 5];
        }
        let m = model(trans, vec![vec![1.0]; 5]);
        let tr = viterbi(&m, &[0, 0, 0, 0]).unwrap();
        use SleepStage::*;
        assert_eq!(tr.path, vec![N1, N2, N2, N2]);
    }

    #[test]
    fn deterministic_model_has_unique_path() {
        // 0 -> 1 -> 2 -> 3 -> 4 -> 0, state j always emits symbol j
        let trans: Vec<Vec<f64>> = (0..5).map(|i| (0..5).map(|j| if j == (i + 1) % 5 { 1.0 } else { 0.0 }).collect()).collect();
        let emis: Vec<Vec<f64>> = (0..5).map(|i| (0..5).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        let tr = viterbi(&model(trans, emis), &[1, 2, 3, 4, 0]).unwrap();
        let idx: Vec<usize> = tr.path.iter().map(|s| s.index()).collect();
        assert_eq!(idx, vec![1, 2, 3, 4, 0]);
        assert_eq!(tr.log_prob, 0.0);
    }

    #[test]
    fn empty_and_out_of_range_rejected() {
        let m = model(vec![vec![0.2; 5]; 5], vec![vec![0.5, 0.5]; 5]);
        assert!(viterbi(&m, &[]).is_err());
        assert!(viterbi(&m, &[2]).is_err());
    }

    #[test]
    fn log_domain_matches_linear_domain() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let m = model(random_rows(&mut rng, 5, 5), random_rows(&mut rng, 5, 4));
            let obs: Vec<usize> = (0..6).map(|_| rng.gen_range(0..4)).collect();
            let tr = viterbi(&m, &obs).unwrap();
            let mut lin: Vec<f64> = (0..5).map(|j| m.trans[0][j] * m.emis[j][obs[0]]).collect();
            for t in 0..obs.len() {
                if t > 0 {
                    lin = (0..5)
                        .map(|j| (0..5).map(|s| lin[s] * m.trans[s][j]).fold(0.0, f64::max) * m.emis[j][obs[t]])
                        .collect();
                }
                for j in 0..5 {
                    let e = tr.nu[t][j].exp();
                    assert!((e - lin[j]).abs() <= 1e-9 * lin[j]);
                }
            }
        }
    }
}
