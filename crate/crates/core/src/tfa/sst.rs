use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::stft::{StftGrid, StftParams, Window};
use crate::error::{Error, Result};

/// Marks a bin whose reassignment is undefined (|V_h| numerically zero).
pub const DISCARD: f64 = f64::NEG_INFINITY;

/// Bins with |V_h| below this fraction of the column maximum are discarded.
pub const RELATIVE_FLOOR: f64 = 1e-12;

/// Nonnegative (time, reassigned bin) energy matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SynchroSpectrum {
    pub values: Vec<f64>,
    pub start: usize,
    pub n_times: usize,
    pub n_bins: usize,
    pub params: StftParams,
}

impl SynchroSpectrum {
    pub fn column(&self, t: usize) -> &[f64] {
        &self.values[t * self.n_bins..(t + 1) * self.n_bins]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

fn check_pair(vh: &StftGrid, vdh: &StftGrid) -> Result<()> {
    if vh.n_times != vdh.n_times || vh.n_bins != vdh.n_bins || vh.start != vdh.start {
        return Err(Error::Dimension(format!(
            "STFT grids differ: {}x{} at {} vs {}x{} at {}",
            vh.n_times, vh.n_bins, vh.start, vdh.n_times, vdh.n_bins, vdh.start
        )));
    }
    if vh.window != Window::Gaussian || vdh.window != Window::GaussianDerivative {
        return Err(Error::InvalidInput(
            "expected a Gaussian-window grid and a derivative-window grid".into(),
        ));
    }
    Ok(())
}

/// Writes the reassigned (fractional) bin of every entry of one column.
pub fn reassign_column(params: &StftParams, vh: &[Complex64], vdh: &[Complex64], out: &mut [f64]) {
    let c = params.num_bins as f64 / (2.0 * PI * params.sigma);
    let peak = vh.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let floor = peak * RELATIVE_FLOOR;
    for k in 0..vh.len() {
        let a = vh[k];
        let mag = a.norm();
        out[k] = if mag == 0.0 || mag < floor {
            DISCARD
        } else {
            // Im(B / A) = Im(B conj(A)) / |A|^2
            let im = (vdh[k] * a.conj()).im / (mag * mag);
            k as f64 - c * im
        };
    }
}

/// Adds the squeezed energy of one column into `acc`.
pub fn squeeze_column(params: &StftParams, vh: &[Complex64], vdh: &[Complex64], omega: &mut [f64], acc: &mut [f64]) {
    reassign_column(params, vh, vdh, omega);
    let nb = acc.len() as f64;
    for (a, &w) in vh.iter().zip(omega.iter()) {
        if w == DISCARD {
            continue;
        }
        let khat = (w + 0.5).floor();
        if khat >= 0.0 && khat < nb {
            acc[khat as usize] += a.norm_sqr();
        }
    }
}

/// Reassigned bin index for every (time, bin) entry; [`DISCARD`] where the
/// plain STFT vanishes.
pub fn reassign_freq(vh: &StftGrid, vdh: &StftGrid) -> Result<Vec<f64>> {
    check_pair(vh, vdh)?;
    let mut out = vec![0.0; vh.values.len()];
    for t in 0..vh.n_times {
        let nb = vh.n_bins;
        reassign_column(&vh.params, vh.column(t), vdh.column(t), &mut out[t * nb..(t + 1) * nb]);
    }
    Ok(out)
}

/// Synchrosqueezed spectrogram: each |V_h|^2 moves to the unit bin
/// `[khat - 1/2, khat + 1/2)` containing its reassigned frequency. Energy
/// reassigned outside the stored bin range is discarded.
pub fn synchrosqueeze(vh: &StftGrid, vdh: &StftGrid) -> Result<SynchroSpectrum> {
    check_pair(vh, vdh)?;
    let nb = vh.n_bins;
    let mut values = vec![0.0; vh.values.len()];
    let mut omega = vec![0.0; nb];
    for t in 0..vh.n_times {
        squeeze_column(&vh.params, vh.column(t), vdh.column(t), &mut omega, &mut values[t * nb..(t + 1) * nb]);
    }
    Ok(SynchroSpectrum {
        values,
        start: vh.start,
        n_times: vh.n_times,
        n_bins: nb,
        params: vh.params,
    })
}
