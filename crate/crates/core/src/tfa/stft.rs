use std::ops::Range;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bins kept above `max_freq` so that energy reassigned from just above the
/// analysed range is still seen.
pub const GUARD_BINS: usize = 16;

/// Parameters of the Gaussian-window STFT.
///
/// The window has `window_len` samples and is `(1/H) h(n / sigma)` with
/// `h(z) = exp(-z^2/2)` and `H = window_len`. Setting `sigma = window_len`
/// gives the literal discrete transform; the default `sigma = window_len / 10`
/// places the support at five standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftParams {
    /// Seconds per sample.
    pub tau: f64,
    /// Window support H, samples.
    pub window_len: usize,
    /// Gaussian scale, samples.
    pub sigma: f64,
    /// Number of frequency bins K.
    pub num_bins: usize,
    /// Highest frequency kept (Hz). `None` keeps all K bins.
    pub max_freq: Option<f64>,
}

impl Default for StftParams {
    fn default() -> Self {
        StftParams::new(0.01, 1001, 4004)
    }
}

impl StftParams {
    pub fn new(tau: f64, window_len: usize, num_bins: usize) -> Self {
        StftParams {
            tau,
            window_len,
            sigma: window_len as f64 / 10.0,
            num_bins,
            max_freq: Some(50.0),
        }
    }

    pub fn full_spectrum(mut self) -> Self {
        self.max_freq = None;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidInput(format!("tau must be positive, got {}", self.tau)));
        }
        if self.window_len == 0 {
            return Err(Error::InvalidInput("window length must be positive".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.num_bins < self.window_len {
            return Err(Error::InvalidInput(format!(
                "K = {} is smaller than the window length {}",
                self.num_bins, self.window_len
            )));
        }
        if let Some(f) = self.max_freq {
            if !(f > 0.0) {
                return Err(Error::InvalidInput(format!("max_freq must be positive, got {f}")));
            }
        }
        Ok(())
    }

    /// Samples before and after the window centre.
    pub fn support(&self) -> (usize, usize) {
        let left = (self.window_len - 1) / 2;
        (left, self.window_len - 1 - left)
    }

    /// Number of bins stored per column.
    pub fn stored_bins(&self) -> usize {
        match self.max_freq {
            None => self.num_bins,
            Some(f) => {
                let top = (f * self.tau * self.num_bins as f64).floor() as usize;
                (top + 1 + GUARD_BINS).min(self.num_bins)
            }
        }
    }

    /// Frequency in Hz of (possibly fractional) bin `k`.
    pub fn bin_freq(&self, k: f64) -> f64 {
        k / (self.tau * self.num_bins as f64)
    }

    /// Window taps indexed from `-left` to `right`.
    pub fn window(&self, kind: Window) -> Vec<f64> {
        let (left, right) = self.support();
        let h = self.window_len as f64;
        (-(left as isize)..=right as isize)
            .map(|n| {
                let z = n as f64 / self.sigma;
                let g = (-0.5 * z * z).exp() / h;
                match kind {
                    Window::Gaussian => g,
                    Window::GaussianDerivative => -z * g,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    /// `h(z) = exp(-z^2/2)`
    Gaussian,
    /// `h'(z) = -z exp(-z^2/2)`
    GaussianDerivative,
}

/// STFT values for a run of consecutive time indices.
///
/// `values` is row-major over (time, bin). The phase is referenced to the
/// window centre, i.e. `V(j,k) = sum_m x_m g(m-j) exp(-i 2 pi k (m-j) / K)`.
/// This differs from an absolute phase reference only by the unimodular factor
/// `exp(-i 2 pi k j / K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StftGrid {
    pub values: Vec<Complex64>,
    /// Sample index of the first column.
    pub start: usize,
    pub n_times: usize,
    pub n_bins: usize,
    pub params: StftParams,
    pub window: Window,
}

impl StftGrid {
    pub fn column(&self, t: usize) -> &[Complex64] {
        &self.values[t * self.n_bins..(t + 1) * self.n_bins]
    }

    pub fn get(&self, t: usize, k: usize) -> Complex64 {
        self.values[t * self.n_bins + k]
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// Computes one column of both the plain and the derivative-window STFT with
/// a single complex FFT of `x (g + i g')`.
pub struct StftEngine {
    params: StftParams,
    fft: Arc<dyn Fft<f64>>,
    taps: Vec<Complex64>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
    n_bins: usize,
}

impl StftEngine {
    pub fn new(params: StftParams) -> Result<Self> {
        params.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(params.num_bins);
        let g = params.window(Window::Gaussian);
        let gd = params.window(Window::GaussianDerivative);
        let taps = g.iter().zip(&gd).map(|(&a, &b)| Complex64::new(a, b)).collect();
        let scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        Ok(StftEngine {
            params,
            buf: vec![Complex64::default(); params.num_bins],
            fft,
            taps,
            scratch,
            n_bins: params.stored_bins(),
        })
    }

    pub fn params(&self) -> &StftParams {
        &self.params
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    /// Fills `vh` and `vdh` (length `n_bins`) with the column at sample `j`.
    /// Samples outside the signal are taken as zero.
    pub fn column(&mut self, signal: &[f64], j: usize, vh: &mut [Complex64], vdh: &mut [Complex64]) {
        let k_all = self.params.num_bins;
        let (left, _) = self.params.support();
        self.buf.iter_mut().for_each(|b| *b = Complex64::default());
        for (i, tap) in self.taps.iter().enumerate() {
            let m = j as isize + i as isize - left as isize;
            if m < 0 || m as usize >= signal.len() {
                continue;
            }
            let n = i as isize - left as isize;
            let pos = n.rem_euclid(k_all as isize) as usize;
            self.buf[pos] = tap * signal[m as usize];
        }
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        for k in 0..self.n_bins {
            let z = self.buf[k];
            let zc = self.buf[(k_all - k) % k_all].conj();
            vh[k] = (z + zc) * 0.5;
            // (z - zc) / 2i
            let d = (z - zc) * 0.5;
            vdh[k] = Complex64::new(d.im, -d.re);
        }
    }
}

pub(crate) fn check_finite(signal: &[f64]) -> Result<()> {
    if let Some(i) = signal.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("sample {i} is not finite")));
    }
    Ok(())
}

/// Plain and derivative-window STFT over the time indices `times`.
pub fn stft_pair(
    signal: &[f64],
    params: &StftParams,
    times: Range<usize>,
) -> Result<(StftGrid, StftGrid)> {
    check_finite(signal)?;
    let mut engine = StftEngine::new(*params)?;
    let nb = engine.n_bins();
    let nt = times.len();
    let mut vh = vec![Complex64::default(); nt * nb];
    let mut vdh = vec![Complex64::default(); nt * nb];
    for (t, j) in times.clone().enumerate() {
        let (a, b) = (&mut vh[t * nb..(t + 1) * nb], &mut vdh[t * nb..(t + 1) * nb]);
        engine.column(signal, j, a, b);
    }
    let grid = |values, window| StftGrid {
        values,
        start: times.start,
        n_times: nt,
        n_bins: nb,
        params: *params,
        window,
    };
    Ok((grid(vh, Window::Gaussian), grid(vdh, Window::GaussianDerivative)))
}

/// STFT with the chosen window over the time indices `times`.
pub fn stft(signal: &[f64], params: &StftParams, window: Window, times: Range<usize>) -> Result<StftGrid> {
    let (vh, vdh) = stft_pair(signal, params, times)?;
    Ok(match window {
        Window::Gaussian => vh,
        Window::GaussianDerivative => vdh,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Direct evaluation of the windowed sum, absolute phase reference.
    fn brute(signal: &[f64], p: &StftParams, kind: Window, j: usize, k: usize) -> Complex64 {
        let (left, right) = p.support();
        let taps = p.window(kind);
        let mut acc = Complex64::default();
        for m in j as isize - left as isize..=j as isize + right as isize {
            if m < 0 || m as usize >= signal.len() {
                continue;
            }
            let g = taps[(m - j as isize + left as isize) as usize];
            let ph = -2.0 * PI * k as f64 * m as f64 / p.num_bins as f64;
            acc += Complex64::from_polar(signal[m as usize] * g, ph);
        }
        acc
    }

    fn small() -> StftParams {
        StftParams {
            tau: 0.01,
            window_len: 101,
            sigma: 15.0,
            num_bins: 128,
            max_freq: None,
        }
    }

    #[test]
    fn matches_direct_sum() {
        let p = small();
        let x: Vec<f64> = (0..400).map(|i| ((i * 37 % 101) as f64 / 50.0 - 1.0) + (0.1 * i as f64).sin()).collect();
        let (vh, vdh) = stft_pair(&x, &p, 0..400).unwrap();
        for &j in &[0usize, 3, 50, 200, 399] {
            for k in 0..p.num_bins {
                let shift = Complex64::from_polar(1.0, -2.0 * PI * (k * j) as f64 / p.num_bins as f64);
                let a = brute(&x, &p, Window::Gaussian, j, k);
                let b = brute(&x, &p, Window::GaussianDerivative, j, k);
                assert!((vh.get(j, k) * shift - a).norm() < 1e-12, "j={j} k={k}");
                assert!((vdh.get(j, k) * shift - b).norm() < 1e-12, "j={j} k={k}");
            }
        }
    }

    #[test]
    fn cosine_peaks_at_expected_bin() {
        let p = StftParams::new(0.01, 1001, 4004);
        let x: Vec<f64> = (0..3000).map(|m| (2.0 * PI * 10.0 * m as f64 * 0.01).cos()).collect();
        let v = stft(&x, &p, Window::Gaussian, 1500..1501).unwrap();
        let col = v.column(0);
        let best = (0..col.len()).max_by(|&a, &b| col[a].norm().total_cmp(&col[b].norm())).unwrap();
        assert_eq!(best, 400);
    }

    #[test]
    fn zero_signal_gives_zero_grid() {
        let v = stft(&[0.0; 300], &small(), Window::Gaussian, 0..300).unwrap();
        assert!(v.values.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn impulse_is_flat_over_frequency() {
        let p = small();
        let mut x = vec![0.0; 300];
        x[140] = 1.0;
        let v = stft(&x, &p, Window::Gaussian, 100..200).unwrap();
        let g = p.window(Window::Gaussian);
        for t in 0..100 {
            let j = 100 + t;
            let off = 140 - j as isize;
            let expect = if off.unsigned_abs() <= 50 { g[(off + 50) as usize] } else { 0.0 };
            for k in 0..p.num_bins {
                assert!((v.get(t, k).norm() - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rejects_short_k_and_nan() {
        let mut p = small();
        p.num_bins = 64;
        assert!(stft(&[0.0; 10], &p, Window::Gaussian, 0..10).is_err());
        assert!(stft(&[0.0, f64::NAN], &small(), Window::Gaussian, 0..2).is_err());
    }

    #[test]
    fn band_limited_storage() {
        let p = StftParams::new(0.01, 1001, 4004);
        assert_eq!(p.stored_bins(), 2002 + 1 + GUARD_BINS);
    }
}
