use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stage::SleepStage;

const S: usize = SleepStage::COUNT;

/// Rows are expert stages, columns predicted stages, both in stage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; S]; S],
}

impl ConfusionMatrix {
    pub fn from_rows(rows: [[u64; S]; S]) -> Self {
        ConfusionMatrix { counts: rows }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, p: usize) -> u64 {
        self.counts[p].iter().sum()
    }

    pub fn col_sum(&self, q: usize) -> u64 {
        self.counts.iter().map(|r| r[q]).sum()
    }
}

impl AddAssign for ConfusionMatrix {
    fn add_assign(&mut self, rhs: Self) {
        for p in 0..S {
            for q in 0..S {
                self.counts[p][q] += rhs.counts[p][q];
            }
        }
    }
}

pub fn confusion(truth: &[SleepStage], pred: &[SleepStage]) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::Dimension(format!("{} true labels but {} predictions", truth.len(), pred.len())));
    }
    let mut m = ConfusionMatrix::default();
    for (t, p) in truth.iter().zip(pred) {
        m.counts[t.index()][p.index()] += 1;
    }
    Ok(m)
}

/// Per-class scores. `None` marks a class that never occurs in truth or prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub stage: SleepStage,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub kappa: f64,
    /// Expected (chance) accuracy from the marginals.
    pub expected_accuracy: f64,
}

/// Precision, recall, F1, accuracy, macro-F1 and Cohen's kappa.
///
/// A class with zero row and column sums is undefined and left out of the
/// macro average; a zero denominator otherwise scores 0.
pub fn metrics(m: &ConfusionMatrix) -> Result<MetricsReport> {
    let n = m.total();
    if n == 0 {
        return Err(Error::InvalidInput("confusion matrix is empty".into()));
    }
    let nf = n as f64;
    let mut per_class = Vec::with_capacity(S);
    let mut f1s = Vec::new();
    let mut trace = 0u64;
    let mut ea = 0.0;
    for p in 0..S {
        let tp = m.counts[p][p];
        trace += tp;
        let (row, col) = (m.row_sum(p), m.col_sum(p));
        ea += (row as f64 / nf) * (col as f64 / nf);
        let stage = SleepStage::from_index(p).unwrap();
        if row == 0 && col == 0 {
            per_class.push(ClassMetrics {
                stage,
                precision: None,
                recall: None,
                f1: None,
            });
            continue;
        }
        let pr = if col > 0 { tp as f64 / col as f64 } else { 0.0 };
        let re = if row > 0 { tp as f64 / row as f64 } else { 0.0 };
        let f1 = if pr + re > 0.0 { 2.0 * pr * re / (pr + re) } else { 0.0 };
        f1s.push(f1);
        per_class.push(ClassMetrics {
            stage,
            precision: Some(pr),
            recall: Some(re),
            f1: Some(f1),
        });
    }
    let acc = trace as f64 / nf;
    let kappa = if 1.0 - ea > 0.0 {
        (acc - ea) / (1.0 - ea)
    } else if acc == 1.0 {
        1.0
    } else {
        0.0
    };
    Ok(MetricsReport {
        per_class,
        accuracy: acc,
        macro_f1: f1s.iter().sum::<f64>() / f1s.len() as f64,
        kappa,
        expected_accuracy: ea,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_agreement() {
        let m = ConfusionMatrix::from_rows([[3, 0, 0, 0, 0], [0, 4, 0, 0, 0], [0, 0, 5, 0, 0], [0, 0, 0, 6, 0], [0, 0, 0, 0, 7]]);
        let r = metrics(&m).unwrap();
        assert_eq!((r.accuracy, r.kappa, r.macro_f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn single_epoch_confusion() {
        use SleepStage::*;
        let m = confusion(&[Awake], &[Rem]).unwrap();
        assert_eq!(m.counts[0][1], 1);
        assert_eq!(m.total(), 1);
        assert!(confusion(&[Awake], &[]).is_err());
        let d = confusion(&[Awake, N2, N2], &[Awake, N2, N2]).unwrap();
        assert_eq!(d.counts[3][3], 2);
        assert_eq!(d.counts[0][0], 1);
    }

    #[test]
    fn empty_matrix_rejected() {
        assert!(metrics(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn absent_class_excluded_from_macro() {
        let m = ConfusionMatrix::from_rows([[2, 0, 0, 0, 0], [0, 2, 0, 0, 0], [0; 5], [0; 5], [0; 5]]);
        let r = metrics(&m).unwrap();
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!(r.per_class[2].f1, None);
        // predicted but never true: counts as 0
        let m = ConfusionMatrix::from_rows([[1, 1, 0, 0, 0], [0, 2, 0, 0, 0], [0; 5], [0; 5], [0; 5]]);
        let r = metrics(&m).unwrap();
        assert_eq!(r.per_class[0].precision, Some(1.0));
        assert_eq!(r.per_class[0].recall, Some(0.5));
    }

    #[test]
    fn kappa_identity_against_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let mut rows = [[0u64; 5]; 5];
            rows.iter_mut().flatten().for_each(|c| *c = rng.gen_range(0..50));
            rows[0][0] += 1;
            let m = ConfusionMatrix::from_rows(rows);
            let r = metrics(&m).unwrap();
            // oracle: expand to label lists and count agreement by pairs
            let mut truth = Vec::new();
            let mut pred = Vec::new();
            for p in 0..5 {
                for q in 0..5 {
                    for _ in 0..rows[p][q] {
                        truth.push(p);
                        pred.push(q);
                    }
                }
            }
            let n = truth.len() as f64;
            let acc = truth.iter().zip(&pred).filter(|(a, b)| a == b).count() as f64 / n;
            let mut ea = 0.0;
            for c in 0..5 {
                let a = truth.iter().filter(|&&t| t == c).count() as f64;
                let b = pred.iter().filter(|&&t| t == c).count() as f64;
                ea += a * b;
            }
            ea /= n * n;
            assert!((r.accuracy - acc).abs() < 1e-14);
            assert!((r.expected_accuracy - ea).abs() < 1e-14);
            assert!((r.kappa - (acc - ea) / (1.0 - ea)).abs() < 1e-12);
            for c in &r.per_class {
                let (p, q, f) = (c.precision.unwrap(), c.recall.unwrap(), c.f1.unwrap());
                if p + q > 0.0 {
                    assert!((f - 2.0 * p * q / (p + q)).abs() < 1e-14);
                }
            }
        }
    }
}
