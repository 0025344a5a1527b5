use super::edf::{Channel, Recording};
use super::hypnogram::{Hypnogram, StageLabel};
use crate::stage::SleepStage;

/// AASM scoring window, seconds.
pub const EPOCH_SECONDS: f64 = 30.0;

/// One scoring window of a recording. Samples are not copied; use
/// [`LabeledEpoch::window`] to borrow them from a channel.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEpoch {
    /// Ordinal of the window counted from the recording start.
    pub index: usize,
    /// Seconds from recording start.
    pub onset: f64,
    pub length: f64,
    pub label: StageLabel,
}

impl LabeledEpoch {
    pub fn stage(&self) -> Option<SleepStage> {
        match self.label {
            StageLabel::Stage(s) => Some(s),
            StageLabel::Excluded(_) => None,
        }
    }

    /// Sample index range of this epoch in a channel.
    pub fn range(&self, channel: &Channel) -> std::ops::Range<usize> {
        let start = (self.onset * channel.sampling_rate).round() as usize;
        let len = (self.length * channel.sampling_rate).round() as usize;
        start..start + len
    }

    pub fn window<'a>(&self, channel: &'a Channel) -> Option<&'a [f64]> {
        channel.samples.get(self.range(channel))
    }
}

#[derive(Debug, Clone, Default)]
pub struct Segmentation {
    pub epochs: Vec<LabeledEpoch>,
    /// Windows that extended past the end of the signal.
    pub dropped_past_end: usize,
    /// Scored intervals whose duration was not a multiple of the epoch length.
    pub ragged_entries: usize,
}

impl Segmentation {
    /// Epochs with one of the five stages; excluded epochs are removed.
    pub fn scored(&self) -> Vec<LabeledEpoch> {
        self.epochs
            .iter()
            .filter(|e| e.stage().is_some())
            .cloned()
            .collect()
    }
}

/// Cuts the recording into labelled windows of `epoch_len` seconds following the hypnogram.
pub fn segment_epochs(rec: &Recording, hyp: &Hypnogram, epoch_len: f64) -> Segmentation {
    let mut seg = Segmentation::default();
    for entry in &hyp.entries {
        let n = (entry.duration / epoch_len + 1e-9).floor() as usize;
        if (entry.duration - n as f64 * epoch_len).abs() > 1e-6 {
            seg.ragged_entries += 1;
        }
        let label = StageLabel::from_raw(&entry.raw_label);
        for k in 0..n {
            let onset = entry.onset + k as f64 * epoch_len;
            let end = onset + epoch_len;
            let fits = rec.channels.iter().all(|c| {
                let stop = (end * c.sampling_rate).round() as usize;
                stop <= c.samples.len()
            });
            if !fits || end > rec.duration + 1e-9 {
                seg.dropped_past_end += 1;
                continue;
            }
            seg.epochs.push(LabeledEpoch {
                index: (onset / epoch_len).round() as usize,
                onset,
                length: epoch_len,
                label: label.clone(),
            });
        }
    }
    if seg.dropped_past_end > 0 {
        log::warn!(
            "{} epoch(s) extend past the end of the signal and were dropped",
            seg.dropped_past_end
        );
    }
    if seg.ragged_entries > 0 {
        log::warn!(
            "{} hypnogram entr(y/ies) are not a whole number of {epoch_len} s epochs",
            seg.ragged_entries
        );
    }
    seg
}

/// Trims leading and trailing wakefulness to at most `margin_min` minutes
/// before the first and after the last sleep epoch.
///
/// Everything between the first and the last sleep epoch is kept. Input
/// without any sleep epoch is returned unchanged.
pub fn truncate_wake(epochs: &[LabeledEpoch], margin_min: f64) -> Vec<LabeledEpoch> {
    let is_sleep = |e: &LabeledEpoch| matches!(e.stage(), Some(s) if s != SleepStage::Awake);
    let (first, last) = match (
        epochs.iter().position(is_sleep),
        epochs.iter().rposition(is_sleep),
    ) {
        (Some(f), Some(l)) => (f, l),
        _ => {
            log::warn!("no sleep epochs found; wake truncation skipped");
            return epochs.to_vec();
        }
    };
    let margin = margin_min * 60.0;
    let lo = epochs[first].onset - margin - 1e-9;
    let hi = epochs[last].onset + epochs[last].length + margin + 1e-9;
    epochs
        .iter()
        .enumerate()
        .filter(|(i, e)| {
            (first..=last).contains(i) || (e.onset >= lo && e.onset + e.length <= hi)
        })
        .map(|(_, e)| e.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::edf::{Scaling, StartTime};
    use crate::ingest::hypnogram::HypnogramEntry;

    fn recording(seconds: usize) -> Recording {
        Recording {
            channels: vec![Channel {
                label: "EEG".into(),
                samples: vec![0.0; seconds * 100],
                sampling_rate: 100.0,
                scaling: Scaling {
                    physical_min: -1.0,
                    physical_max: 1.0,
                    digital_min: -32768,
                    digital_max: 32767,
                    physical_dimension: "uV".into(),
                },
            }],
            start_time: StartTime::default(),
            duration: seconds as f64,
        }
    }

    fn hyp(labels: &[(&str, f64)]) -> Hypnogram {
        let mut t = 0.0;
        let entries = labels
            .iter()
            .map(|&(l, d)| {
                let e = HypnogramEntry {
                    onset: t,
                    duration: d,
                    raw_label: l.into(),
                };
                t += d;
                e
            })
            .collect();
        Hypnogram::new(entries).unwrap()
    }

    fn epochs_of(stages: &[SleepStage]) -> Vec<LabeledEpoch> {
        stages
            .iter()
            .enumerate()
            .map(|(i, &s)| LabeledEpoch {
                index: i,
                onset: i as f64 * 30.0,
                length: 30.0,
                label: StageLabel::Stage(s),
            })
            .collect()
    }

    #[test]
    fn n4_is_relabeled() {
        let rec = recording(90);
        let h = hyp(&[("Sleep stage W", 60.0), ("Sleep stage 4", 30.0)]);
        let seg = segment_epochs(&rec, &h, 30.0);
        let stages: Vec<_> = seg.epochs.iter().map(|e| e.stage()).collect();
        assert_eq!(
            stages,
            vec![Some(SleepStage::Awake), Some(SleepStage::Awake), Some(SleepStage::N3)]
        );
        for e in &seg.epochs {
            assert_eq!(e.window(&rec.channels[0]).unwrap().len(), 3000);
        }
    }

    #[test]
    fn movement_is_excluded() {
        let rec = recording(60);
        let h = hyp(&[("Movement time", 30.0), ("Sleep stage 2", 30.0)]);
        let seg = segment_epochs(&rec, &h, 30.0);
        assert!(matches!(seg.epochs[0].label, StageLabel::Excluded(_)));
        assert_eq!(seg.scored().len(), 1);
    }

    #[test]
    fn empty_recording_gives_no_epochs() {
        let rec = recording(0);
        let seg = segment_epochs(&rec, &hyp(&[("W", 60.0)]), 30.0);
        assert!(seg.epochs.is_empty());
        assert_eq!(seg.dropped_past_end, 2);
    }

    #[test]
    fn windows_past_end_are_dropped() {
        let rec = recording(75);
        let seg = segment_epochs(&rec, &hyp(&[("W", 90.0)]), 30.0);
        assert_eq!(seg.epochs.len(), 2);
        assert_eq!(seg.dropped_past_end, 1);
    }

    #[test]
    fn wake_margin_30_minutes() {
        let mut stages = vec![SleepStage::Awake; 120];
        stages.extend([SleepStage::N1, SleepStage::N2, SleepStage::Rem]);
        let out = truncate_wake(&epochs_of(&stages), 30.0);
        assert_eq!(out.len(), 63);
        assert_eq!(out[0].index, 60);
    }

    #[test]
    fn wake_margin_90_minutes() {
        let mut stages = vec![SleepStage::Awake; 200];
        stages.push(SleepStage::N2);
        stages.extend(vec![SleepStage::Awake; 10]);
        let out = truncate_wake(&epochs_of(&stages), 90.0);
        assert_eq!(out.len(), 180 + 1 + 10);
        assert_eq!(out[0].index, 20);
    }

    #[test]
    fn no_wake_runs_is_identity() {
        let e = epochs_of(&[SleepStage::N1, SleepStage::Awake, SleepStage::N2]);
        assert_eq!(truncate_wake(&e, 30.0), e);
    }

    #[test]
    fn all_awake_unchanged() {
        let e = epochs_of(&[SleepStage::Awake; 200]);
        assert_eq!(truncate_wake(&e, 30.0), e);
    }
}
