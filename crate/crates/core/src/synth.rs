//! Synthetic two-channel polysomnography with known stages.
//!
//! Stages follow a Markov chain. Every epoch is a sum of stage-specific tones
//! with jittered amplitude, frequency and phase, partly blended with the tones
//! of a neighbouring stage, plus white noise.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{scaling_for, Channel, Hypnogram, HypnogramEntry, Recording, StartTime, EPOCH_SECONDS};
use crate::stage::SleepStage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub subjects: usize,
    pub nights: usize,
    pub epochs_per_night: usize,
    /// Hz.
    pub sampling_rate: f64,
    /// Probability of staying in the current stage for the next epoch.
    pub stay_probability: f64,
    /// Standard deviation of the additive white noise, in microvolts.
    pub noise: f64,
    /// Largest weight given to a neighbouring stage's tones in one epoch.
    pub mixing: f64,
    /// Subject ages are drawn uniformly from `[age_min, age_max]`.
    pub age_min: f64,
    pub age_max: f64,
    pub channels: [String; 2],
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            subjects: 6,
            nights: 1,
            epochs_per_night: 90,
            sampling_rate: 100.0,
            stay_probability: 0.9,
            noise: 4.0,
            mixing: 0.3,
            age_min: 25.0,
            age_max: 34.0,
            channels: ["Fpz-Cz".into(), "Pz-Oz".into()],
            seed: 0,
        }
    }
}

/// A tone: frequency in Hz and amplitude in microvolts for each channel.
struct Tone(f64, [f64; 2]);

fn signature(stage: SleepStage) -> &'static [Tone] {
    use SleepStage::*;
    match stage {
        Awake => &[Tone(9.5, [12.0, 20.0]), Tone(35.0, [8.0, 5.0])],
        Rem => &[Tone(5.5, [14.0, 10.0]), Tone(22.0, [8.0, 10.0])],
        N1 => &[Tone(18.0, [10.0, 8.0]), Tone(5.5, [8.0, 12.0])],
        N2 => &[Tone(13.5, [20.0, 15.0]), Tone(1.5, [8.0, 6.0])],
        N3 => &[Tone(1.5, [60.0, 40.0])],
    }
}

/// Stages an epoch may blend into: adjacent depths, and REM with N1 and wake.
fn neighbours(stage: SleepStage) -> &'static [SleepStage] {
    use SleepStage::*;
    match stage {
        Awake => &[N1, Rem],
        Rem => &[N1, Awake],
        N1 => &[Awake, N2, Rem],
        N2 => &[N1, N3],
        N3 => &[N2],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthNight {
    pub id: String,
    pub recording: Recording,
    pub hypnogram: Hypnogram,
    pub stages: Vec<SleepStage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSubject {
    pub id: String,
    pub age: f64,
    pub nights: Vec<SynthNight>,
}

/// Markov stage sequence starting awake. Leaving a stage picks one of the
/// other four uniformly. Sequences are redrawn until every stage occurs, so
/// `n` must be at least 5.
pub fn stage_sequence(n: usize, stay: f64, rng: &mut ChaCha8Rng) -> Vec<SleepStage> {
    assert!(n >= SleepStage::COUNT, "need at least one epoch per stage");
    loop {
        let mut seq = Vec::with_capacity(n);
        let mut cur = SleepStage::Awake;
        for _ in 0..n {
            seq.push(cur);
            if !rng.gen_bool(stay) {
                let next = rng.gen_range(0..SleepStage::COUNT - 1);
                let next = if next >= cur.index() { next + 1 } else { next };
                cur = SleepStage::from_index(next).unwrap();
            }
        }
        if SleepStage::ALL.iter().all(|s| seq.contains(s)) {
            return seq;
        }
    }
}

/// One epoch of `channel` (0 or 1) for `stage`. A random neighbouring stage
/// contributes with a weight drawn from `[0, mixing)`.
pub fn synth_epoch(stage: SleepStage, channel: usize, fs: f64, noise: f64, mixing: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = (EPOCH_SECONDS * fs).round() as usize;
    let normal = Normal::new(0.0, noise.max(0.0)).expect("finite noise level");
    let near = neighbours(stage);
    let other = near[rng.gen_range(0..near.len())];
    let w = if mixing > 0.0 { rng.gen_range(0.0..mixing) } else { 0.0 };
    let mut tones: Vec<(f64, f64, f64)> = Vec::new();
    for (s, weight) in [(stage, 1.0 - w), (other, w)] {
        for Tone(f, amp) in signature(s) {
            let f = f + rng.gen_range(-0.3..0.3);
            let a = weight * amp[channel] * rng.gen_range(0.8..1.2);
            tones.push((f, a, rng.gen_range(0.0..2.0 * PI)));
        }
    }
    (0..n)
        .map(|m| {
            let t = m as f64 / fs;
            let s: f64 = tones.iter().map(|(f, a, p)| a * (2.0 * PI * f * t + p).cos()).sum();
            s + normal.sample(rng)
        })
        .collect()
}

fn night(cfg: &SynthConfig, id: String, rng: &mut ChaCha8Rng) -> SynthNight {
    let stages = stage_sequence(cfg.epochs_per_night, cfg.stay_probability, rng);
    let channels = (0..2)
        .map(|c| {
            let samples: Vec<f64> = stages
                .iter()
                .flat_map(|&s| synth_epoch(s, c, cfg.sampling_rate, cfg.noise, cfg.mixing, rng))
                .collect();
            Channel {
                label: cfg.channels[c].clone(),
                scaling: scaling_for(&samples, "uV"),
                samples,
                sampling_rate: cfg.sampling_rate,
            }
        })
        .collect();
    let entries = stages
        .iter()
        .enumerate()
        .map(|(i, s)| HypnogramEntry {
            onset: i as f64 * EPOCH_SECONDS,
            duration: EPOCH_SECONDS,
            raw_label: format!("Sleep stage {}", hypnogram_code(*s)),
        })
        .collect();
    SynthNight {
        id,
        recording: Recording {
            channels,
            start_time: StartTime::default(),
            duration: stages.len() as f64 * EPOCH_SECONDS,
        },
        hypnogram: Hypnogram { entries },
        stages,
    }
}

fn hypnogram_code(s: SleepStage) -> &'static str {
    match s {
        SleepStage::Awake => "W",
        SleepStage::Rem => "R",
        SleepStage::N1 => "1",
        SleepStage::N2 => "2",
        SleepStage::N3 => "3",
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<Vec<SynthSubject>> {
    if cfg.subjects == 0 || cfg.nights == 0 {
        return Err(Error::Config("synthetic dataset needs at least one subject and one night".into()));
    }
    if cfg.epochs_per_night < SleepStage::COUNT {
        return Err(Error::Config(format!("{} epochs per night cannot hold all five stages", cfg.epochs_per_night)));
    }
    if !(0.0..1.0).contains(&cfg.stay_probability) {
        return Err(Error::Config(format!("stay probability {} outside [0, 1)", cfg.stay_probability)));
    }
    if !(0.0..1.0).contains(&cfg.mixing) {
        return Err(Error::Config(format!("mixing weight {} outside [0, 1)", cfg.mixing)));
    }
    if !(cfg.sampling_rate > 0.0) || !(cfg.noise >= 0.0) || !(cfg.age_min > 0.0 && cfg.age_max >= cfg.age_min) {
        return Err(Error::Config("sampling rate, noise level or age range invalid".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok((0..cfg.subjects)
        .map(|s| {
            let id = format!("SYN{s:02}");
            let age = rng.gen_range(cfg.age_min..=cfg.age_max).round();
            let nights = (0..cfg.nights).map(|n| night(cfg, format!("{id}N{}", n + 1), &mut rng)).collect();
            SynthSubject { id, age, nights }
        })
        .collect())
}

/// Hypnogram as `onset,duration,label` CSV.
pub fn hypnogram_csv(h: &Hypnogram) -> String {
    let mut s = String::from("onset,duration,label\n");
    for e in &h.entries {
        s.push_str(&format!("{},{},{}\n", e.onset, e.duration, e.raw_label));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_hypnogram, segment_epochs};

    #[test]
    fn every_stage_present_and_start_awake() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let s = stage_sequence(40, 0.9, &mut rng);
            assert_eq!(s[0], SleepStage::Awake);
            assert!(SleepStage::ALL.iter().all(|x| s.contains(x)));
        }
    }

    #[test]
    fn hypnogram_round_trip_matches_stages() {
        let cfg = SynthConfig {
            subjects: 2,
            epochs_per_night: 12,
            ..Default::default()
        };
        let data = generate(&cfg).unwrap();
        assert_eq!(data.len(), 2);
        let n = &data[1].nights[0];
        n.recording.validate().unwrap();
        let hyp = parse_hypnogram(hypnogram_csv(&n.hypnogram).as_bytes()).unwrap();
        let seg = segment_epochs(&n.recording, &hyp, EPOCH_SECONDS);
        let got: Vec<SleepStage> = seg.epochs.iter().map(|e| e.stage().unwrap()).collect();
        assert_eq!(got, n.stages);
    }

    #[test]
    fn deterministic_in_seed() {
        let cfg = SynthConfig {
            subjects: 1,
            epochs_per_night: 6,
            ..Default::default()
        };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = SynthConfig { seed: 1, ..cfg.clone() };
        assert_ne!(generate(&cfg).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate(&SynthConfig { subjects: 0, ..Default::default() }).is_err());
        assert!(generate(&SynthConfig { stay_probability: 1.0, ..Default::default() }).is_err());
    }
}
