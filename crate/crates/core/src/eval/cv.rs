use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{confusion, metrics, ConfusionMatrix, MetricsReport};
use crate::error::{Error, Result};
use crate::hmm::{estimate_emissions, estimate_transitions, lbg_codebook, HmmModel};
use crate::stage::SleepStage;

/// One scored night: a feature vector and an expert stage per epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Night {
    pub id: String,
    pub features: Vec<Vec<f64>>,
    pub stages: Vec<SleepStage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    /// Years.
    pub age: f64,
    pub nights: Vec<Night>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub codebook_size: usize,
    pub smoothing: f64,
    /// Subsample every training night to equal per-stage counts.
    pub class_balance: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            codebook_size: 64,
            smoothing: 1.0,
            class_balance: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    /// Training subjects per held-out subject.
    pub k_hat: usize,
    pub seed: u64,
    pub train: TrainConfig,
}

/// 64-bit FNV-1a, used to derive stable per-subject seeds.
fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Seed for everything random in the fold that holds out `subject`.
pub fn subject_seed(seed: u64, subject: &str) -> u64 {
    seed ^ fnv1a(subject)
}

/// The `k_hat` subjects of `pool` closest in age to `test`, ties by smaller id.
/// Returns indices into `pool`.
pub fn select_training_subjects(pool: &[SubjectRecord], test: &SubjectRecord, k_hat: usize) -> Result<Vec<usize>> {
    if pool.iter().any(|s| s.id == test.id) {
        return Err(Error::InvalidInput(format!("training pool contains the test subject {}", test.id)));
    }
    if k_hat == 0 || k_hat > pool.len() {
        return Err(Error::Config(format!(
            "k_hat = {k_hat} but only {} candidate training subjects",
            pool.len()
        )));
    }
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.sort_by(|&a, &b| {
        let da = (pool[a].age - test.age).abs();
        let db = (pool[b].age - test.age).abs();
        da.total_cmp(&db).then_with(|| pool[a].id.cmp(&pool[b].id))
    });
    idx.truncate(k_hat);
    Ok(idx)
}

/// Indices (ascending) of a per-stage subsample where every present stage
/// keeps as many epochs as the least represented present stage.
pub fn class_balance(stages: &[SleepStage], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut by_stage: Vec<Vec<usize>> = vec![Vec::new(); SleepStage::COUNT];
    for (i, s) in stages.iter().enumerate() {
        by_stage[s.index()].push(i);
    }
    let present: Vec<&Vec<usize>> = by_stage.iter().filter(|v| !v.is_empty()).collect();
    if present.len() < SleepStage::COUNT && !stages.is_empty() {
        log::warn!(
            "{} of 5 stages absent; balancing over the present stages only",
            SleepStage::COUNT - present.len()
        );
    }
    let min = present.iter().map(|v| v.len()).min().unwrap_or(0);
    let mut out: Vec<usize> = Vec::with_capacity(min * present.len());
    for v in present {
        let pick = rand::seq::index::sample(rng, v.len(), min);
        out.extend(pick.into_iter().map(|k| v[k]));
    }
    out.sort_unstable();
    out
}

/// Trains a model on the nights of `subjects`.
///
/// The codebook and emission counts use the (optionally class-balanced)
/// epochs; transition counts use the complete nights because a subsample has
/// no temporal order.
pub fn train_hmm(subjects: &[&SubjectRecord], cfg: &TrainConfig, seed: u64) -> Result<HmmModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vectors = Vec::new();
    let mut stage_seqs = Vec::new();
    let mut sel_stages = Vec::new();
    let mut sel_sizes = Vec::new();
    for s in subjects {
        for n in &s.nights {
            if n.features.len() != n.stages.len() {
                return Err(Error::Dimension(format!(
                    "night {}: {} feature rows but {} stages",
                    n.id,
                    n.features.len(),
                    n.stages.len()
                )));
            }
            let idx: Vec<usize> = if cfg.class_balance {
                class_balance(&n.stages, &mut rng)
            } else {
                (0..n.stages.len()).collect()
            };
            vectors.extend(idx.iter().map(|&i| n.features[i].clone()));
            sel_stages.push(idx.iter().map(|&i| n.stages[i]).collect::<Vec<_>>());
            sel_sizes.push(idx.len());
            stage_seqs.push(n.stages.clone());
        }
    }
    let codebook = lbg_codebook(&vectors, cfg.codebook_size, rng_seed(&mut rng))?;
    let symbols_flat = codebook.quantize_all(&vectors)?;
    let mut symbols = Vec::with_capacity(sel_sizes.len());
    let mut at = 0;
    for n in sel_sizes {
        symbols.push(symbols_flat[at..at + n].to_vec());
        at += n;
    }
    let emis = estimate_emissions(&sel_stages, &symbols, codebook.size(), cfg.smoothing)?;
    let trans = estimate_transitions(&stage_seqs, cfg.smoothing);
    Ok(HmmModel {
        init_state: SleepStage::Awake,
        trans,
        emis,
        codebook,
        smoothing: cfg.smoothing,
        config: serde_json::json!({
            "codebook_size": cfg.codebook_size,
            "class_balance": cfg.class_balance,
            "seed": seed,
            "training_subjects": subjects.iter().map(|s| s.id.clone()).collect::<Vec<_>>(),
        }),
    })
}

fn rng_seed(rng: &mut ChaCha8Rng) -> u64 {
    use rand::RngCore;
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NightResult {
    pub subject: String,
    pub night: String,
    pub truth: Vec<SleepStage>,
    pub pred: Vec<SleepStage>,
    pub confusion: ConfusionMatrix,
    pub metrics: Option<MetricsReport>,
}

impl NightResult {
    /// `epoch,truth,pred` rows with 1-based stage codes.
    pub fn hypnogram_csv(&self) -> String {
        let mut s = String::from("epoch,truth,pred\n");
        for (i, (t, p)) in self.truth.iter().zip(&self.pred).enumerate() {
            s.push_str(&format!("{i},{},{}\n", t.code(), p.code()));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_subject: String,
    pub training_subjects: Vec<String>,
    pub nights: Vec<NightResult>,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

fn mean_sd(v: &[f64]) -> MeanSd {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    MeanSd { mean, sd: var.sqrt() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerNightSummary {
    pub nights: usize,
    pub accuracy: MeanSd,
    pub macro_f1: MeanSd,
    pub kappa: MeanSd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub scheme: String,
    pub seed: u64,
    pub k_hat: usize,
    pub folds: Vec<FoldResult>,
    pub pooled_confusion: ConfusionMatrix,
    pub pooled: MetricsReport,
    pub per_night: Option<PerNightSummary>,
}

fn check_ids(data: &[SubjectRecord]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for s in data {
        if !seen.insert(s.id.as_str()) {
            return Err(Error::InvalidInput(format!("duplicate subject id {}", s.id)));
        }
        if !(s.age > 0.0) {
            return Err(Error::InvalidInput(format!("subject {} has non-positive age {}", s.id, s.age)));
        }
    }
    Ok(())
}

/// Trains on age-matched subjects outside `excluded` and decodes `test`.
fn run_subject(data: &[SubjectRecord], test: usize, excluded: &BTreeSet<usize>, fold: usize, cfg: &CvConfig) -> Result<FoldResult> {
    let subject = &data[test];
    let pool_idx: Vec<usize> = (0..data.len()).filter(|i| !excluded.contains(i)).collect();
    let pool: Vec<SubjectRecord> = pool_idx.iter().map(|&i| data[i].clone()).collect();
    let chosen = select_training_subjects(&pool, subject, cfg.k_hat)?;
    let train: Vec<&SubjectRecord> = chosen.iter().map(|&i| &data[pool_idx[i]]).collect();
    if train.iter().any(|s| s.id == subject.id) {
        return Err(Error::InvalidInput(format!("subject {} leaked into its own training set", subject.id)));
    }
    let model = train_hmm(&train, &cfg.train, subject_seed(cfg.seed, &subject.id)).map_err(|e| e.context(format!("training for subject {}", subject.id)))?;
    let mut nights = Vec::with_capacity(subject.nights.len());
    let mut total = ConfusionMatrix::default();
    for n in &subject.nights {
        if n.features.is_empty() {
            continue;
        }
        let pred = model.decode(&n.features)?.path;
        let c = confusion(&n.stages, &pred)?;
        total += c;
        nights.push(NightResult {
            subject: subject.id.clone(),
            night: n.id.clone(),
            truth: n.stages.clone(),
            pred,
            confusion: c,
            metrics: metrics(&c).ok(),
        });
    }
    Ok(FoldResult {
        fold,
        test_subject: subject.id.clone(),
        training_subjects: train.iter().map(|s| s.id.clone()).collect(),
        nights,
        confusion: total,
    })
}

fn assemble(scheme: &str, cfg: &CvConfig, folds: Vec<FoldResult>) -> Result<CvReport> {
    let mut pooled_confusion = ConfusionMatrix::default();
    for f in &folds {
        pooled_confusion += f.confusion;
    }
    let pooled = metrics(&pooled_confusion)?;
    let per: Vec<&MetricsReport> = folds.iter().flat_map(|f| f.nights.iter().filter_map(|n| n.metrics.as_ref())).collect();
    let per_night = (!per.is_empty()).then(|| PerNightSummary {
        nights: per.len(),
        accuracy: mean_sd(&per.iter().map(|m| m.accuracy).collect::<Vec<_>>()),
        macro_f1: mean_sd(&per.iter().map(|m| m.macro_f1).collect::<Vec<_>>()),
        kappa: mean_sd(&per.iter().map(|m| m.kappa).collect::<Vec<_>>()),
    });
    Ok(CvReport {
        scheme: scheme.into(),
        seed: cfg.seed,
        k_hat: cfg.k_hat,
        folds,
        pooled_confusion,
        pooled,
        per_night,
    })
}

/// Leave-one-subject-out cross validation over every subject.
pub fn losocv(data: &[SubjectRecord], cfg: &CvConfig) -> Result<CvReport> {
    check_ids(data)?;
    if data.len() < cfg.k_hat + 1 {
        return Err(Error::Config(format!(
            "LOSOCV with k_hat = {} needs at least {} subjects, have {}",
            cfg.k_hat,
            cfg.k_hat + 1,
            data.len()
        )));
    }
    let folds = (0..data.len())
        .into_par_iter()
        .map(|i| run_subject(data, i, &BTreeSet::from([i]), i, cfg))
        .collect::<Result<Vec<_>>>()?;
    assemble("losocv", cfg, folds)
}

/// Seeded assignment of subjects to `folds` groups: ids are sorted, shuffled
/// and dealt round-robin.
pub fn fold_assignment(data: &[SubjectRecord], folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| data[a].id.cmp(&data[b].id));
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut group = vec![0; data.len()];
    for (pos, &i) in order.iter().enumerate() {
        group[i] = pos % folds;
    }
    group
}

/// Group-wise cross validation: each held-out subject is decoded by a model
/// trained on age-matched subjects from the other groups.
pub fn kfold(data: &[SubjectRecord], folds: usize, cfg: &CvConfig) -> Result<CvReport> {
    check_ids(data)?;
    if folds < 2 || folds > data.len() {
        return Err(Error::Config(format!("{folds} folds for {} subjects", data.len())));
    }
    let group = fold_assignment(data, folds, cfg.seed);
    let results = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let excluded: BTreeSet<usize> = (0..data.len()).filter(|&j| group[j] == group[i]).collect();
            run_subject(data, i, &excluded, group[i], cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(&format!("{folds}-fold"), cfg, results)
}
