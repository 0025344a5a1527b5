use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sleepgeom::eval::{class_balance, kfold, losocv, CvConfig, CvReport, Night, SubjectRecord, TrainConfig};
use sleepgeom::SleepStage;

/// Features are a noisy one-hot code of the stage.
fn night(id: &str, n: usize, rng: &mut ChaCha8Rng) -> Night {
    let mut stages = Vec::with_capacity(n);
    let mut cur = 0usize;
    for i in 0..n {
        if i < 5 {
            cur = i;
        } else if rng.gen_bool(0.2) {
            cur = rng.gen_range(0..5);
        }
        stages.push(SleepStage::from_index(cur).unwrap());
    }
    let features = stages
        .iter()
        .map(|s| (0..5).map(|k| if k == s.index() { 1.0 } else { 0.0 } + rng.gen_range(-0.3..0.3)).collect())
        .collect();
    Night { id: id.into(), features, stages }
}

fn dataset(subjects: usize, nights: usize, seed: u64) -> Vec<SubjectRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..subjects)
        .map(|s| {
            let id = format!("S{s}");
            SubjectRecord {
                age: 20.0 + 7.0 * s as f64,
                nights: (0..nights).map(|n| night(&format!("{id}N{n}"), 60, &mut rng)).collect(),
                id,
            }
        })
        .collect()
}

fn cfg(k_hat: usize) -> CvConfig {
    CvConfig {
        k_hat,
        seed: 9,
        train: TrainConfig {
            codebook_size: 8,
            ..Default::default()
        },
    }
}

fn assert_no_leakage(r: &CvReport) {
    for f in &r.folds {
        assert!(!f.training_subjects.contains(&f.test_subject), "fold {} trains on {}", f.fold, f.test_subject);
        assert!(f.nights.iter().all(|n| n.subject == f.test_subject));
    }
}

#[test]
fn two_subject_toy_pools_its_folds() {
    let data = dataset(2, 2, 1);
    let r = losocv(&data, &cfg(1)).unwrap();
    assert_eq!(r.folds.len(), 2);
    assert_eq!(r.folds[0].training_subjects, vec!["S1".to_string()]);
    assert_eq!(r.folds[1].training_subjects, vec!["S0".to_string()]);
    let mut sum = r.folds[0].confusion;
    sum += r.folds[1].confusion;
    assert_eq!(sum, r.pooled_confusion);
    assert_eq!(r.pooled_confusion.total(), 4 * 60);
    assert_eq!(r.per_night.as_ref().unwrap().nights, 4);
    assert_no_leakage(&r);
}

#[test]
fn losocv_is_deterministic_and_leak_free() {
    let data = dataset(6, 2, 2);
    let a = losocv(&data, &cfg(3)).unwrap();
    let b = losocv(&data, &cfg(3)).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_no_leakage(&a);
    assert!(a.pooled.accuracy > 0.8, "{}", a.pooled.accuracy);
    let other = losocv(&data, &CvConfig { seed: 10, ..cfg(3) }).unwrap();
    assert_eq!(other.seed, 10);
}

#[test]
fn five_folds_of_five_subjects_is_losocv() {
    let data = dataset(5, 1, 3);
    let l = losocv(&data, &cfg(4)).unwrap();
    let k = kfold(&data, 5, &cfg(4)).unwrap();
    assert_eq!(l.pooled_confusion, k.pooled_confusion);
    assert_eq!(l.per_night, k.per_night);
    for (a, b) in l.folds.iter().zip(&k.folds) {
        assert_eq!(a.test_subject, b.test_subject);
        assert_eq!(a.training_subjects, b.training_subjects);
        assert_eq!(a.nights, b.nights);
    }
    assert_no_leakage(&k);
}

#[test]
fn kfold_trains_outside_the_held_out_group() {
    let data = dataset(6, 1, 4);
    let r = kfold(&data, 3, &cfg(2)).unwrap();
    for f in &r.folds {
        let group: Vec<&String> = r.folds.iter().filter(|g| g.fold == f.fold).map(|g| &g.test_subject).collect();
        assert_eq!(group.len(), 2);
        assert!(f.training_subjects.iter().all(|s| !group.contains(&s)));
    }
    assert!(kfold(&data, 3, &cfg(5)).is_err());
    assert!(kfold(&data, 7, &cfg(1)).is_err());
}

proptest! {
    #[test]
    fn balancing_equalizes_present_stages(codes in prop::collection::vec(0usize..5, 1..200), seed in any::<u64>()) {
        let stages: Vec<SleepStage> = codes.iter().map(|&c| SleepStage::from_index(c).unwrap()).collect();
        let idx = class_balance(&stages, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        let count = |v: &[usize], s: usize| v.iter().filter(|&&i| stages[i].index() == s).count();
        let all: Vec<usize> = (0..stages.len()).collect();
        let present: Vec<usize> = (0..5).filter(|&s| count(&all, s) > 0).collect();
        let min = present.iter().map(|&s| count(&all, s)).min().unwrap();
        for &s in &present {
            prop_assert_eq!(count(&idx, s), min);
        }
        prop_assert_eq!(idx.len(), min * present.len());
    }
}
