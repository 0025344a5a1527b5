//! EDF / EDF+C reader and writer.
//!
//! Only 16-bit little-endian continuous recordings are supported. EDF+D
//! (discontinuous) files are rejected. Annotation signals (`EDF Annotations`)
//! are kept as raw bytes so the hypnogram parser can decode the TALs.
//!
//! Format reference: <https://www.edfplus.info/specs/edf.html>

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

const FIXED_HEADER: usize = 256;
const SIGNAL_HEADER: usize = 256;
pub(crate) const ANNOTATION_LABEL: &str = "EDF Annotations";

/// Affine map between stored 16-bit integers and physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i32,
    pub digital_max: i32,
    pub physical_dimension: String,
}

impl Scaling {
    fn gain(&self) -> f64 {
        (self.physical_max - self.physical_min) / (self.digital_max - self.digital_min) as f64
    }

    pub fn to_physical(&self, digital: i16) -> f64 {
        (digital as f64 - self.digital_min as f64) * self.gain() + self.physical_min
    }

    pub fn to_digital(&self, physical: f64) -> i16 {
        let d = (physical - self.physical_min) / self.gain() + self.digital_min as f64;
        d.round()
            .clamp(self.digital_min as f64, self.digital_max as f64) as i16
    }
}

/// Recording start as written in the EDF header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StartTime {
    pub day: u8,
    pub month: u8,
    /// Two-digit EDF year mapped to 1985..=2084 as the EDF spec prescribes.
    pub year: u16,
    pub hour: u8,
    pub minute: u8,
    pub second: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub label: String,
    /// Samples in physical units.
    pub samples: Vec<f64>,
    /// Hz.
    pub sampling_rate: f64,
    pub scaling: Scaling,
}

impl Channel {
    pub fn tau(&self) -> f64 {
        1.0 / self.sampling_rate
    }
}

/// A multichannel, uniformly sampled recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub channels: Vec<Channel>,
    pub start_time: StartTime,
    /// Seconds.
    pub duration: f64,
}

impl Recording {
    pub fn channel(&self, label: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.label.trim() == label.trim())
    }

    /// Checks the equal-duration and sample-count invariants.
    pub fn validate(&self) -> Result<()> {
        for c in &self.channels {
            if !(c.sampling_rate > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "channel '{}' has non-positive sampling rate",
                    c.label
                )));
            }
            let expected = self.duration * c.sampling_rate;
            if (c.samples.len() as f64 - expected).abs() > 1e-6 * expected.max(1.0) {
                return Err(Error::InvalidInput(format!(
                    "channel '{}' has {} samples, expected {}",
                    c.label,
                    c.samples.len(),
                    expected
                )));
            }
        }
        Ok(())
    }
}

/// Per-signal header fields.
#[derive(Debug, Clone)]
pub(crate) struct SignalHeader {
    pub label: String,
    pub scaling: Scaling,
    pub samples_per_record: usize,
}

/// A parsed EDF file before channels are split into ordinary and annotation signals.
#[derive(Debug, Clone)]
pub(crate) struct EdfFile {
    pub start_time: StartTime,
    pub record_duration: f64,
    pub n_records: usize,
    pub signals: Vec<SignalHeader>,
    /// Raw sample bytes per signal, concatenated over records.
    pub data: Vec<Vec<u8>>,
    pub is_edf_plus: bool,
}

fn field(bytes: &[u8], offset: usize, len: usize) -> Result<&str> {
    let raw = bytes.get(offset..offset + len).ok_or_else(|| Error::EdfHeader {
        offset,
        msg: format!("header ends before field of {len} bytes"),
    })?;
    std::str::from_utf8(raw)
        .map(|s| s.trim())
        .map_err(|_| Error::EdfHeader {
            offset,
            msg: "field is not ASCII".into(),
        })
}

fn number<T: std::str::FromStr>(bytes: &[u8], offset: usize, len: usize, what: &str) -> Result<T> {
    let s = field(bytes, offset, len)?;
    s.parse::<T>().map_err(|_| Error::EdfHeader {
        offset,
        msg: format!("{what}: cannot parse '{s}'"),
    })
}

fn parse_start(bytes: &[u8]) -> Result<StartTime> {
    let date = field(bytes, 168, 8)?;
    let time = field(bytes, 176, 8)?;
    let split = |s: &str, offset: usize| -> Result<[u16; 3]> {
        let parts: Vec<&str> = s.split('.').collect();
        if parts.len() != 3 {
            return Err(Error::EdfHeader {
                offset,
                msg: format!("malformed date/time '{s}'"),
            });
        }
        let mut out = [0u16; 3];
        for (o, p) in out.iter_mut().zip(parts) {
            *o = p.trim().parse().map_err(|_| Error::EdfHeader {
                offset,
                msg: format!("malformed date/time '{s}'"),
            })?;
        }
        Ok(out)
    };
    let [d, m, y] = split(date, 168)?;
    let [hh, mm, ss] = split(time, 176)?;
    let year = if y >= 85 { 1900 + y } else { 2000 + y };
    Ok(StartTime {
        day: d as u8,
        month: m as u8,
        year,
        hour: hh as u8,
        minute: mm as u8,
        second: ss as u8,
    })
}

pub(crate) fn parse_edf_file(bytes: &[u8]) -> Result<EdfFile> {
    if bytes.len() < FIXED_HEADER {
        return Err(Error::EdfHeader {
            offset: bytes.len(),
            msg: format!("file has {} bytes, fixed header needs {FIXED_HEADER}", bytes.len()),
        });
    }
    let version = field(bytes, 0, 8)?;
    if version != "0" {
        return Err(Error::EdfHeader {
            offset: 0,
            msg: format!("version field must be '0', found '{version}'"),
        });
    }
    let start_time = parse_start(bytes)?;
    let header_bytes: usize = number(bytes, 184, 8, "header size")?;
    let reserved = field(bytes, 192, 44)?;
    if reserved.starts_with("EDF+D") {
        return Err(Error::EdfUnsupported(
            "EDF+D (discontinuous) recordings are not supported".into(),
        ));
    }
    if reserved.starts_with("BDF") || reserved.starts_with("24BIT") {
        return Err(Error::EdfUnsupported("24-bit BDF data".into()));
    }
    let is_edf_plus = reserved.starts_with("EDF+C");
    let n_records_raw: i64 = number(bytes, 236, 8, "number of data records")?;
    let record_duration: f64 = number(bytes, 244, 8, "data record duration")?;
    let ns: usize = number(bytes, 252, 4, "number of signals")?;
    if header_bytes != FIXED_HEADER + ns * SIGNAL_HEADER {
        return Err(Error::EdfHeader {
            offset: 184,
            msg: format!(
                "header size {header_bytes} inconsistent with {ns} signals (expected {})",
                FIXED_HEADER + ns * SIGNAL_HEADER
            ),
        });
    }
    if bytes.len() < header_bytes {
        return Err(Error::EdfHeader {
            offset: bytes.len(),
            msg: format!("signal headers need {header_bytes} bytes"),
        });
    }
    if !(record_duration >= 0.0) {
        return Err(Error::EdfHeader {
            offset: 244,
            msg: "negative data record duration".into(),
        });
    }

    // Signal header fields are stored column-wise: all labels, then all transducers, ...
    let base = FIXED_HEADER;
    let col = |width: usize, preceding: usize, i: usize| base + ns * preceding + i * width;
    let mut signals = Vec::with_capacity(ns);
    for i in 0..ns {
        let label = field(bytes, col(16, 0, i), 16)?.to_string();
        let dim = field(bytes, col(8, 16 + 80, i), 8)?.to_string();
        let pmin: f64 = number(bytes, col(8, 16 + 80 + 8, i), 8, "physical minimum")?;
        let pmax: f64 = number(bytes, col(8, 16 + 80 + 16, i), 8, "physical maximum")?;
        let dmin: i32 = number(bytes, col(8, 16 + 80 + 24, i), 8, "digital minimum")?;
        let dmax: i32 = number(bytes, col(8, 16 + 80 + 32, i), 8, "digital maximum")?;
        let spr: usize = number(bytes, col(8, 16 + 80 + 40 + 80, i), 8, "samples per record")?;
        if label != ANNOTATION_LABEL && dmin == dmax {
            return Err(Error::EdfScaling { channel: i, label });
        }
        signals.push(SignalHeader {
            label,
            scaling: Scaling {
                physical_min: pmin,
                physical_max: pmax,
                digital_min: dmin,
                digital_max: dmax,
                physical_dimension: dim,
            },
            samples_per_record: spr,
        });
    }

    let record_bytes: usize = signals.iter().map(|s| 2 * s.samples_per_record).sum();
    let payload = &bytes[header_bytes..];
    let n_records = if n_records_raw < 0 {
        if record_bytes == 0 {
            0
        } else {
            payload.len() / record_bytes
        }
    } else {
        n_records_raw as usize
    };
    let mut data: Vec<Vec<u8>> = signals
        .iter()
        .map(|s| Vec::with_capacity(2 * s.samples_per_record * n_records))
        .collect();
    for r in 0..n_records {
        let start = r * record_bytes;
        let rec = payload
            .get(start..start + record_bytes)
            .ok_or(Error::EdfTruncated { index: r })?;
        let mut off = 0;
        for (s, sig) in signals.iter().enumerate() {
            let n = 2 * sig.samples_per_record;
            data[s].extend_from_slice(&rec[off..off + n]);
            off += n;
        }
    }
    Ok(EdfFile {
        start_time,
        record_duration,
        n_records,
        signals,
        data,
        is_edf_plus,
    })
}

/// Parses an EDF or EDF+C byte stream into physical-unit channels.
///
/// Annotation signals are skipped; use [`crate::ingest::parse_hypnogram`] for those.
pub fn parse_edf(bytes: &[u8]) -> Result<Recording> {
    let file = parse_edf_file(bytes)?;
    let duration = file.record_duration * file.n_records as f64;
    let mut channels = Vec::new();
    for (sig, raw) in file.signals.iter().zip(&file.data) {
        if sig.label == ANNOTATION_LABEL {
            continue;
        }
        let samples = raw
            .chunks_exact(2)
            .map(|b| sig.scaling.to_physical(i16::from_le_bytes([b[0], b[1]])))
            .collect();
        let sampling_rate = if file.record_duration > 0.0 {
            sig.samples_per_record as f64 / file.record_duration
        } else {
            0.0
        };
        channels.push(Channel {
            label: sig.label.clone(),
            samples,
            sampling_rate,
            scaling: sig.scaling.clone(),
        });
    }
    Ok(Recording {
        channels,
        start_time: file.start_time,
        duration,
    })
}

fn put(buf: &mut Vec<u8>, s: &str, width: usize) {
    let mut bytes: Vec<u8> = s.bytes().take(width).collect();
    bytes.resize(width, b' ');
    buf.extend_from_slice(&bytes);
}

/// Formats a header number so that it fits the 8-byte field.
fn fmt_num(x: f64) -> String {
    let s = format!("{x}");
    if s.len() <= 8 {
        return s;
    }
    for prec in (0..8).rev() {
        let s = format!("{x:.prec$}");
        if s.len() <= 8 {
            return s;
        }
    }
    format!("{}", x.round() as i64)
}

/// Serialises a recording as plain EDF with the given data-record duration.
///
/// Samples are quantised with each channel's [`Scaling`], so a recording whose
/// samples already lie on the digital grid round-trips bit-exactly.
pub fn write_edf(rec: &Recording, record_duration: f64) -> Result<Vec<u8>> {
    let ns = rec.channels.len();
    let spr: Vec<usize> = rec
        .channels
        .iter()
        .map(|c| (c.sampling_rate * record_duration).round() as usize)
        .collect();
    for (c, &n) in rec.channels.iter().zip(&spr) {
        if (n as f64 - c.sampling_rate * record_duration).abs() > 1e-9 || n == 0 {
            return Err(Error::InvalidInput(format!(
                "channel '{}': {} Hz does not give an integer sample count per {record_duration} s record",
                c.label, c.sampling_rate
            )));
        }
        if c.scaling.digital_min == c.scaling.digital_max {
            return Err(Error::InvalidInput(format!(
                "channel '{}' has an empty digital range",
                c.label
            )));
        }
    }
    // Quantise with the scaling exactly as a reader will see it in the header.
    let effective: Vec<Scaling> = rec
        .channels
        .iter()
        .map(|c| Scaling {
            physical_min: fmt_num(c.scaling.physical_min).parse().unwrap_or(c.scaling.physical_min),
            physical_max: fmt_num(c.scaling.physical_max).parse().unwrap_or(c.scaling.physical_max),
            ..c.scaling.clone()
        })
        .collect();
    let n_records = rec
        .channels
        .iter()
        .zip(&spr)
        .map(|(c, &n)| c.samples.len().div_ceil(n))
        .max()
        .unwrap_or(0);

    let mut out = Vec::new();
    put(&mut out, "0", 8);
    put(&mut out, "X X X X", 80);
    put(&mut out, "Startdate X X X X", 80);
    let t = rec.start_time;
    put(&mut out, &format!("{:02}.{:02}.{:02}", t.day, t.month, t.year % 100), 8);
    put(&mut out, &format!("{:02}.{:02}.{:02}", t.hour, t.minute, t.second), 8);
    put(&mut out, &(FIXED_HEADER + ns * SIGNAL_HEADER).to_string(), 8);
    put(&mut out, "", 44);
    put(&mut out, &n_records.to_string(), 8);
    put(&mut out, &fmt_num(record_duration), 8);
    put(&mut out, &ns.to_string(), 4);
    for c in &rec.channels {
        put(&mut out, &c.label, 16);
    }
    for _ in 0..ns {
        put(&mut out, "", 80);
    }
    for c in &rec.channels {
        put(&mut out, &c.scaling.physical_dimension, 8);
    }
    for c in &rec.channels {
        put(&mut out, &fmt_num(c.scaling.physical_min), 8);
    }
    for c in &rec.channels {
        put(&mut out, &fmt_num(c.scaling.physical_max), 8);
    }
    for c in &rec.channels {
        put(&mut out, &c.scaling.digital_min.to_string(), 8);
    }
    for c in &rec.channels {
        put(&mut out, &c.scaling.digital_max.to_string(), 8);
    }
    for _ in 0..ns {
        put(&mut out, "", 80);
    }
    for &n in &spr {
        put(&mut out, &n.to_string(), 8);
    }
    for _ in 0..ns {
        put(&mut out, "", 32);
    }
    for r in 0..n_records {
        for ((c, sc), &n) in rec.channels.iter().zip(&effective).zip(&spr) {
            for i in r * n..(r + 1) * n {
                let d = c.samples.get(i).map(|&x| sc.to_digital(x))
                    .unwrap_or(0);
                out.extend_from_slice(&d.to_le_bytes());
            }
        }
    }
    Ok(out)
}

/// Picks a symmetric physical range that covers `samples` and maps it onto the full i16 range.
pub fn scaling_for(samples: &[f64], dimension: &str) -> Scaling {
    let peak = samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    // Round up to a value with a short decimal representation so the 8-byte
    // header field stores it exactly.
    let peak = if peak > 0.0 { (peak * 1.01).ceil() } else { 1.0 };
    Scaling {
        physical_min: -peak,
        physical_max: peak,
        digital_min: -32768,
        digital_max: 32767,
        physical_dimension: dimension.to_string(),
    }
}
