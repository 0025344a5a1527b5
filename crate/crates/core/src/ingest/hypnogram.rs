use super::edf::{parse_edf_file, ANNOTATION_LABEL};
use crate::error::{Error, Result};
use crate::stage::SleepStage;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypnogramEntry {
    /// Seconds from recording start.
    pub onset: f64,
    /// Seconds.
    pub duration: f64,
    /// Label as found in the source, e.g. `Sleep stage 4` or `Movement time`.
    pub raw_label: String,
}

/// Scored intervals, sorted by onset and non-overlapping.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Hypnogram {
    pub entries: Vec<HypnogramEntry>,
}

/// The scoring outcome of one hypnogram label after AASM relabeling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StageLabel {
    Stage(SleepStage),
    Excluded(String),
}

impl StageLabel {
    /// Maps R&K / AASM labels onto the five AASM stages. Stage 4 (N4) becomes N3;
    /// movement and unknown epochs are excluded.
    pub fn from_raw(raw: &str) -> StageLabel {
        let l = raw.trim();
        let key = l
            .strip_prefix("Sleep stage ")
            .or_else(|| l.strip_prefix("Sleep_stage_"))
            .unwrap_or(l)
            .trim()
            .to_ascii_uppercase();
        let stage = match key.as_str() {
            "W" | "WAKE" | "AWAKE" => SleepStage::Awake,
            "R" | "REM" => SleepStage::Rem,
            "1" | "N1" | "S1" => SleepStage::N1,
            "2" | "N2" | "S2" => SleepStage::N2,
            "3" | "4" | "N3" | "N4" | "S3" | "S4" => SleepStage::N3,
            "?" => return StageLabel::Excluded("unknown stage".into()),
            "MOVEMENT TIME" | "MOVEMENT" | "M" | "MT" => {
                return StageLabel::Excluded("movement".into())
            }
            _ => return StageLabel::Excluded(format!("unrecognised label '{l}'")),
        };
        StageLabel::Stage(stage)
    }
}

impl Hypnogram {
    pub fn new(mut entries: Vec<HypnogramEntry>) -> Result<Self> {
        for e in &entries {
            if !(e.duration >= 0.0) || !e.onset.is_finite() {
                return Err(Error::Hypnogram(format!(
                    "entry '{}' at {} s has invalid duration {}",
                    e.raw_label, e.onset, e.duration
                )));
            }
        }
        entries.sort_by(|a, b| a.onset.total_cmp(&b.onset));
        for w in entries.windows(2) {
            if w[0].onset + w[0].duration > w[1].onset + 1e-9 {
                return Err(Error::Hypnogram(format!(
                    "entries overlap: '{}' [{}, {}) and '{}' starting at {}",
                    w[0].raw_label,
                    w[0].onset,
                    w[0].onset + w[0].duration,
                    w[1].raw_label,
                    w[1].onset
                )));
            }
        }
        Ok(Hypnogram { entries })
    }
}

fn looks_like_edf(bytes: &[u8]) -> bool {
    bytes.len() >= 256 && bytes[..8] == *b"0       "
}

/// Parses a hypnogram from either an EDF+ annotation file or a CSV document
/// with rows `onset_s,duration_s,label`.
pub fn parse_hypnogram(bytes: &[u8]) -> Result<Hypnogram> {
    if looks_like_edf(bytes) {
        return parse_edf_annotations(bytes);
    }
    let text = std::str::from_utf8(bytes)
        .map_err(|_| Error::Hypnogram("unknown format: neither EDF+ nor UTF-8 CSV".into()))?;
    parse_csv(text)
}

fn parse_csv(text: &str) -> Result<Hypnogram> {
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.splitn(3, ',');
        let (a, b, c) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), Some(c)) => (a.trim(), b.trim(), c.trim()),
            _ => {
                return Err(Error::Hypnogram(format!(
                    "unknown format: line {} is not 'onset,duration,label'",
                    lineno + 1
                )))
            }
        };
        let (onset, duration) = match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(o), Ok(d)) => (o, d),
            _ if entries.is_empty() && lineno == 0 => continue, // header row
            _ => {
                return Err(Error::Hypnogram(format!(
                    "line {}: non-numeric onset or duration",
                    lineno + 1
                )))
            }
        };
        if duration < 0.0 {
            return Err(Error::Hypnogram(format!(
                "line {}: negative duration {duration}",
                lineno + 1
            )));
        }
        entries.push(HypnogramEntry {
            onset,
            duration,
            raw_label: c.trim_matches('"').to_string(),
        });
    }
    Hypnogram::new(entries)
}

/// Decodes time-stamped annotation lists (TALs) of an EDF+ file.
fn parse_edf_annotations(bytes: &[u8]) -> Result<Hypnogram> {
    let file = parse_edf_file(bytes)?;
    let mut entries = Vec::new();
    let mut found = false;
    for (sig, raw) in file.signals.iter().zip(&file.data) {
        if sig.label != ANNOTATION_LABEL {
            continue;
        }
        found = true;
        let record_len = 2 * sig.samples_per_record;
        for record in raw.chunks(record_len.max(1)) {
            for tal in record.split(|&b| b == 0) {
                if tal.is_empty() {
                    continue;
                }
                parse_tal(tal, &mut entries)?;
            }
        }
    }
    if !found {
        let kind = if file.is_edf_plus { "EDF+" } else { "plain EDF" };
        return Err(Error::Hypnogram(format!(
            "{kind} file has no '{ANNOTATION_LABEL}' signal"
        )));
    }
    Hypnogram::new(entries)
}

fn parse_tal(tal: &[u8], out: &mut Vec<HypnogramEntry>) -> Result<()> {
    let text = String::from_utf8_lossy(tal);
    let mut fields = text.split('\u{14}');
    let time = fields.next().unwrap_or("");
    let (onset_s, duration_s) = match time.split_once('\u{15}') {
        Some((o, d)) => (o, Some(d)),
        None => (time, None),
    };
    let onset: f64 = onset_s
        .trim()
        .parse()
        .map_err(|_| Error::Hypnogram(format!("malformed TAL onset '{onset_s}'")))?;
    let duration: f64 = match duration_s {
        Some(d) => d
            .trim()
            .parse()
            .map_err(|_| Error::Hypnogram(format!("malformed TAL duration '{d}'")))?,
        None => 0.0,
    };
    if duration < 0.0 {
        return Err(Error::Hypnogram(format!("negative duration at onset {onset}")));
    }
    for label in fields {
        let label = label.trim();
        // Empty annotations are record time-keeping stamps.
        if label.is_empty() {
            continue;
        }
        out.push(HypnogramEntry {
            onset,
            duration,
            raw_label: label.to_string(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_single_entry() {
        let h = parse_hypnogram(b"0,1800,Sleep stage W").unwrap();
        assert_eq!(h.entries.len(), 1);
        assert_eq!(h.entries[0].duration, 1800.0);
        assert_eq!(h.entries[0].raw_label, "Sleep stage W");
    }

    #[test]
    fn csv_with_header_and_variants() {
        let h = parse_hypnogram(
            b"onset_s,duration_s,label\n0,30,Sleep stage ?\n30,30,Movement time\n60,60,Sleep stage 4\n",
        )
        .unwrap();
        assert_eq!(h.entries.len(), 3);
        assert_eq!(h.entries[0].raw_label, "Sleep stage ?");
        assert_eq!(h.entries[1].raw_label, "Movement time");
    }

    #[test]
    fn overlap_rejected() {
        let err = parse_hypnogram(b"0,60,W\n30,30,R\n").unwrap_err();
        assert!(matches!(err, Error::Hypnogram(_)));
    }

    #[test]
    fn negative_duration_rejected() {
        assert!(parse_hypnogram(b"0,-30,W\n").is_err());
    }

    #[test]
    fn unknown_format_rejected() {
        assert!(parse_hypnogram(&[0xff, 0xfe, 0x00, 0x81]).is_err());
        assert!(parse_hypnogram(b"this is not a hypnogram").is_err());
    }

    #[test]
    fn relabeling() {
        assert_eq!(StageLabel::from_raw("Sleep stage 4"), StageLabel::Stage(SleepStage::N3));
        assert_eq!(StageLabel::from_raw("Sleep stage 3"), StageLabel::Stage(SleepStage::N3));
        assert_eq!(StageLabel::from_raw("Sleep stage R"), StageLabel::Stage(SleepStage::Rem));
        assert_eq!(StageLabel::from_raw("W"), StageLabel::Stage(SleepStage::Awake));
        assert!(matches!(StageLabel::from_raw("Movement time"), StageLabel::Excluded(_)));
        assert!(matches!(StageLabel::from_raw("Sleep stage ?"), StageLabel::Excluded(_)));
    }
}
