use std::ops::Range;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::sst::{squeeze_column, SynchroSpectrum};
use super::stft::{check_finite, StftEngine, StftParams};
use crate::error::{Error, Result};

/// A frequency interval in Hz. Bands are half-open `[lo, hi)` unless `closed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub closed: bool,
}

impl Band {
    pub const fn half_open(lo: f64, hi: f64) -> Band {
        Band { lo, hi, closed: false }
    }

    pub const fn closed(lo: f64, hi: f64) -> Band {
        Band { lo, hi, closed: true }
    }

    pub fn contains(&self, f: f64) -> bool {
        f >= self.lo && (f < self.hi || (self.closed && f <= self.hi))
    }
}

/// Total-energy range plus the ratio bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSet {
    pub total: Band,
    pub bands: Vec<Band>,
}

impl Default for BandSet {
    /// delta, theta, alpha, spindle, four beta bands and low gamma.
    fn default() -> Self {
        BandSet {
            total: Band::closed(0.5, 49.0),
            bands: vec![
                Band::half_open(0.5, 4.0),
                Band::half_open(4.0, 7.0),
                Band::half_open(7.0, 12.0),
                Band::half_open(12.0, 16.0),
                Band::half_open(16.0, 20.0),
                Band::half_open(20.0, 24.0),
                Band::half_open(24.0, 28.0),
                Band::half_open(28.0, 31.0),
                Band::closed(31.0, 49.0),
            ],
        }
    }
}

impl BandSet {
    pub fn validate(&self) -> Result<()> {
        let all = std::iter::once(&self.total).chain(&self.bands);
        for b in all {
            if !(b.lo >= 0.0 && b.hi > b.lo) {
                return Err(Error::Config(format!("invalid band [{}, {}]", b.lo, b.hi)));
            }
        }
        for w in self.bands.windows(2) {
            if w[1].lo < w[0].hi {
                return Err(Error::Config(format!(
                    "bands [{}, {}] and [{}, {}] overlap or are unsorted",
                    w[0].lo, w[0].hi, w[1].lo, w[1].hi
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.bands.len() + 1
    }

    /// Per-bin band membership for `n_bins` bins.
    fn bin_map(&self, params: &StftParams, n_bins: usize) -> (Vec<bool>, Vec<Option<usize>>) {
        let freqs = (0..n_bins).map(|k| params.bin_freq(k as f64));
        freqs
            .map(|f| (self.total.contains(f), self.bands.iter().position(|b| b.contains(f))))
            .unzip()
    }
}

/// Total in-band energy followed by the band power ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochFeature {
    pub u: Vec<f64>,
}

/// Feature of one epoch from the squeezed energy summed over its columns.
///
/// `scale` converts the column sum into the time average, `tau / epoch_seconds`.
pub fn features_from_bin_energy(
    energy: &[f64],
    params: &StftParams,
    bands: &BandSet,
    scale: f64,
    epoch: usize,
) -> Result<EpochFeature> {
    let (in_total, which) = bands.bin_map(params, energy.len());
    let mut total = 0.0;
    let mut per_band = vec![0.0; bands.bands.len()];
    for (k, &e) in energy.iter().enumerate() {
        if in_total[k] {
            total += e;
        }
        if let Some(b) = which[k] {
            per_band[b] += e;
        }
    }
    if !(total > 0.0) {
        return Err(Error::SilentEpoch { epoch });
    }
    let mut u = Vec::with_capacity(bands.dim());
    u.push(scale * total);
    u.extend(per_band.iter().map(|e| e / total));
    Ok(EpochFeature { u })
}

/// Feature of epoch `epoch` of a synchrosqueezed spectrum whose first column
/// is the first sample of epoch 0.
pub fn band_features(
    s: &SynchroSpectrum,
    epoch: usize,
    samples_per_epoch: usize,
    bands: &BandSet,
) -> Result<EpochFeature> {
    let cols = epoch * samples_per_epoch..(epoch + 1) * samples_per_epoch;
    if cols.end > s.n_times {
        return Err(Error::Dimension(format!(
            "epoch {epoch} needs columns {:?} but the spectrum has {}",
            cols, s.n_times
        )));
    }
    let mut energy = vec![0.0; s.n_bins];
    for t in cols {
        for (e, v) in energy.iter_mut().zip(s.column(t)) {
            *e += v;
        }
    }
    features_from_bin_energy(&energy, &s.params, bands, 1.0 / samples_per_epoch as f64, epoch)
}

/// Streams epochs through STFT and squeezing without keeping the spectrum.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    pub params: StftParams,
    pub bands: BandSet,
    /// Use every `hop`-th column; 1 uses all of them.
    pub hop: usize,
}

impl FeatureExtractor {
    pub fn new(params: StftParams, bands: BandSet) -> Result<Self> {
        params.validate()?;
        bands.validate()?;
        Ok(FeatureExtractor { params, bands, hop: 1 })
    }

    pub fn with_hop(mut self, hop: usize) -> Self {
        self.hop = hop.max(1);
        self
    }

    /// Squeezed energy per bin summed over the columns of `range`.
    pub fn epoch_energy(&self, engine: &mut StftEngine, signal: &[f64], range: Range<usize>) -> Vec<f64> {
        let nb = engine.n_bins();
        let mut vh = vec![Complex64::default(); nb];
        let mut vdh = vec![Complex64::default(); nb];
        let mut omega = vec![0.0; nb];
        let mut acc = vec![0.0; nb];
        for j in range.step_by(self.hop) {
            engine.column(signal, j, &mut vh, &mut vdh);
            squeeze_column(&self.params, &vh, &vdh, &mut omega, &mut acc);
        }
        acc
    }

    /// Features of the given sample ranges of `signal`; `ids` label errors.
    /// Epochs run in parallel; the result does not depend on the thread count.
    pub fn extract(&self, signal: &[f64], epochs: &[Range<usize>], ids: &[usize]) -> Result<Vec<EpochFeature>> {
        check_finite(signal)?;
        if ids.len() != epochs.len() {
            return Err(Error::Dimension("epoch ids and ranges differ in length".into()));
        }
        StftEngine::new(self.params)?;
        epochs
            .par_iter()
            .zip(ids.par_iter())
            .map_init(
                || StftEngine::new(self.params).expect("validated"),
                |engine, (range, &id)| {
                    let used = range.clone().step_by(self.hop).count().max(1);
                    let energy = self.epoch_energy(engine, signal, range.clone());
                    features_from_bin_energy(&energy, &self.params, &self.bands, 1.0 / used as f64, id)
                },
            )
            .collect()
    }
}
