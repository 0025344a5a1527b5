//! CSV artifacts and run manifests.
//!
//! Floats are written in Rust's shortest round-trip form, so reading an
//! artifact back yields bit-identical values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::stage::SleepStage;

/// Scored epochs kept for one recording after wake truncation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpochTable {
    /// Position of the epoch in the recording, in 30 s steps.
    pub epoch_index: Vec<usize>,
    /// Seconds from recording start.
    pub onset: Vec<f64>,
    pub stages: Vec<SleepStage>,
}

impl EpochTable {
    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }
}

/// Per-epoch rows with their stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageMatrix {
    pub stages: Vec<SleepStage>,
    /// Rows are epochs.
    pub values: DMatrix<f64>,
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read_file(path)?).map_err(|_| format_err(path, "not UTF-8"))
}

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format {
        context: path.display().to_string(),
        msg: msg.into(),
    }
}

fn parse_stage(path: &Path, line: usize, s: &str) -> Result<SleepStage> {
    s.trim()
        .parse::<u8>()
        .ok()
        .and_then(SleepStage::from_code)
        .ok_or_else(|| format_err(path, format!("line {line}: invalid stage code '{s}'")))
}

fn parse_f64(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| format_err(path, format!("line {line}: invalid number '{s}'")))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().skip(1).map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty())
}

fn check_header(path: &Path, text: &str, expected: &str) -> Result<()> {
    match text.lines().next() {
        Some(h) if h.trim() == expected => Ok(()),
        Some(h) => Err(format_err(path, format!("header '{h}' does not match '{expected}'"))),
        None => Err(format_err(path, "empty file")),
    }
}

pub fn epochs_csv(t: &EpochTable) -> String {
    let mut s = String::from("epoch_index,onset,stage\n");
    for i in 0..t.len() {
        let _ = writeln!(s, "{},{},{}", t.epoch_index[i], t.onset[i], t.stages[i].code());
    }
    s
}

pub fn read_epochs_csv(path: &Path) -> Result<EpochTable> {
    let text = read_text(path)?;
    check_header(path, &text, "epoch_index,onset,stage")?;
    let mut t = EpochTable::default();
    for (ln, line) in data_lines(&text) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(format_err(path, format!("line {ln}: expected 3 fields")));
        }
        t.epoch_index.push(f[0].trim().parse().map_err(|_| format_err(path, format!("line {ln}: invalid epoch index")))?);
        t.onset.push(parse_f64(path, ln, f[1])?);
        t.stages.push(parse_stage(path, ln, f[2])?);
    }
    Ok(t)
}

/// `stage,u0,..,u{n-1}` rows.
pub fn features_csv(m: &StageMatrix) -> String {
    let cols: Vec<String> = (0..m.values.ncols()).map(|i| format!("u{i}")).collect();
    let mut s = format!("stage,{}\n", cols.join(","));
    for (i, st) in m.stages.iter().enumerate() {
        s.push_str(&st.code().to_string());
        for v in m.values.row(i).iter() {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

pub fn read_features_csv(path: &Path) -> Result<StageMatrix> {
    let text = read_text(path)?;
    let header = text.lines().next().ok_or_else(|| format_err(path, "empty file"))?;
    let ncols = header.split(',').count() - 1;
    let expected: Vec<String> = std::iter::once("stage".to_string()).chain((0..ncols).map(|i| format!("u{i}"))).collect();
    check_header(path, &text, &expected.join(","))?;
    let mut stages = Vec::new();
    let mut vals = Vec::new();
    for (ln, line) in data_lines(&text) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != ncols + 1 {
            return Err(format_err(path, format!("line {ln}: expected {} fields", ncols + 1)));
        }
        stages.push(parse_stage(path, ln, f[0])?);
        for x in &f[1..] {
            vals.push(parse_f64(path, ln, x)?);
        }
    }
    Ok(StageMatrix {
        values: DMatrix::from_row_slice(stages.len(), ncols, &vals),
        stages,
    })
}

/// `epoch_index,stage,{prefix}_1,..` rows.
pub fn coords_csv(prefix: &str, epochs: &EpochTable, values: &DMatrix<f64>) -> String {
    let cols: Vec<String> = (1..=values.ncols()).map(|i| format!("{prefix}_{i}")).collect();
    let mut s = format!("epoch_index,stage,{}\n", cols.join(","));
    for i in 0..values.nrows() {
        let _ = write!(s, "{},{}", epochs.epoch_index[i], epochs.stages[i].code());
        for v in values.row(i).iter() {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

pub fn read_coords_csv(path: &Path) -> Result<(Vec<usize>, StageMatrix)> {
    let text = read_text(path)?;
    let header = text.lines().next().ok_or_else(|| format_err(path, "empty file"))?;
    let names: Vec<&str> = header.trim().split(',').collect();
    if names.len() < 3 || names[0] != "epoch_index" || names[1] != "stage" {
        return Err(format_err(path, format!("unexpected header '{header}'")));
    }
    let ncols = names.len() - 2;
    let mut idx = Vec::new();
    let mut stages = Vec::new();
    let mut vals = Vec::new();
    for (ln, line) in data_lines(&text) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != ncols + 2 {
            return Err(format_err(path, format!("line {ln}: expected {} fields", ncols + 2)));
        }
        idx.push(f[0].trim().parse().map_err(|_| format_err(path, format!("line {ln}: invalid epoch index")))?);
        stages.push(parse_stage(path, ln, f[1])?);
        for x in &f[2..] {
            vals.push(parse_f64(path, ln, x)?);
        }
    }
    Ok((
        idx,
        StageMatrix {
            values: DMatrix::from_row_slice(stages.len(), ncols, &vals),
            stages,
        },
    ))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Provenance of one command run. Timings vary between runs; everything else
/// is a function of the config and the input bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: PipelineConfig,
    /// Input path to sha256 digest.
    pub inputs: BTreeMap<String, String>,
    /// Stage name and wall-clock seconds, in execution order.
    pub timings: Vec<(String, f64)>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, config: &PipelineConfig) -> Self {
        RunManifest {
            command: command.into(),
            config: config.clone(),
            inputs: BTreeMap::new(),
            timings: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.insert(path.display().to_string(), sha256_hex(bytes));
    }

    /// Runs `f` and records its duration under `stage`.
    pub fn time<T>(&mut self, stage: impl Into<String>, f: impl FnOnce() -> T) -> T {
        let start = std::time::Instant::now();
        let out = f();
        self.timings.push((stage.into(), start.elapsed().as_secs_f64()));
        out
    }

    /// Writes `manifests/{command}.json` under `out_dir`.
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join("manifests").join(format!("{}.json", self.command));
        let text = serde_json::to_string_pretty(self).map_err(|e| format_err(&path, e.to_string()))?;
        write_file(&path, text.as_bytes())?;
        Ok(path)
    }
}
