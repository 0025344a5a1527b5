use std::io::{Read, Write};

use super::sst::SynchroSpectrum;
use super::stft::StftParams;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SSTF64\0\x01";

/// Writes `S` as little-endian f64, row-major over (time, bin), after a
/// 64-byte header: magic, rows, cols, first sample index, K, tau, sigma,
/// window length.
pub fn write_spectrum<W: Write>(s: &SynchroSpectrum, mut w: W) -> Result<()> {
    let io = |e| Error::io("writing spectrum", e);
    w.write_all(MAGIC).map_err(io)?;
    for v in [s.n_times as u64, s.n_bins as u64, s.start as u64, s.params.num_bins as u64] {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.write_all(&s.params.tau.to_le_bytes()).map_err(io)?;
    w.write_all(&s.params.sigma.to_le_bytes()).map_err(io)?;
    w.write_all(&(s.params.window_len as u64).to_le_bytes()).map_err(io)?;
    for v in &s.values {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    Ok(())
}

pub fn read_spectrum<R: Read>(mut r: R) -> Result<SynchroSpectrum> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::io("reading spectrum", e))?;
    let bad = |msg: &str| Error::Format {
        context: "spectrum file".into(),
        msg: msg.into(),
    };
    if bytes.len() < 64 || &bytes[..8] != MAGIC {
        return Err(bad("missing header"));
    }
    let word = |i: usize| <[u8; 8]>::try_from(&bytes[8 + 8 * i..16 + 8 * i]).unwrap();
    let (rows, cols, start, k) = (
        u64::from_le_bytes(word(0)) as usize,
        u64::from_le_bytes(word(1)) as usize,
        u64::from_le_bytes(word(2)) as usize,
        u64::from_le_bytes(word(3)) as usize,
    );
    let tau = f64::from_le_bytes(word(4));
    let sigma = f64::from_le_bytes(word(5));
    let window_len = u64::from_le_bytes(word(6)) as usize;
    let body = &bytes[64..];
    if body.len() != rows * cols * 8 {
        return Err(bad("body length does not match the header"));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let max_freq = (cols < k).then(|| (cols as f64 - 0.5) / (tau * k as f64));
    Ok(SynchroSpectrum {
        values,
        start,
        n_times: rows,
        n_bins: cols,
        params: StftParams {
            tau,
            window_len,
            sigma,
            num_bins: k,
            max_freq,
        },
    })
}
