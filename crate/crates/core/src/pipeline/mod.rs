//! Configuration, orchestration of the processing chain and artifact export.
//!
//! Every command writes below `paths.output_dir`:
//!
//! | command  | artifacts |
//! |----------|-----------|
//! | features | `epochs/{id}.csv`, `features/{id}.{channel}.csv` |
//! | embed    | `embed/{id}.{channel}.csv` |
//! | fuse     | `fuse/{id}.csv`, `fuse/{id}.adm.csv`, `fuse/{id}.q_x.csv`, `fuse/{id}.q_y.csv` |
//! | train    | `model.json` |
//! | predict  | `predict/{id}.csv` |
//! | evaluate | `evaluate/report.json`, `evaluate/hypnograms/{id}.csv` |
//! | export   | `export/{id}.{channel}.sst` |
//!
//! and a `manifests/{command}.json` run manifest. Downstream commands reuse
//! upstream artifacts whose `.key` file matches the current inputs and config.

pub mod artifacts;
pub mod commands;
pub mod config;

use std::path::Path;

pub use artifacts::{sha256_hex, EpochTable, RunManifest, StageMatrix};
pub use commands::{
    channel_slug, cmd_embed, cmd_evaluate, cmd_export, cmd_features, cmd_fuse, cmd_predict, cmd_train, embed_channel, extract_recording, fuse_channels,
    FusedGroup, Pipeline, RecordingFeatures,
};
pub use config::{AdmAffinity, ChannelMode, PipelineConfig, RecordingSpec, Scheme, Scope, OUTPUT_DIR_ENV};

use crate::error::Result;
use crate::ingest::write_edf;
use crate::synth::{generate, hypnogram_csv, SynthConfig};

/// Writes a synthetic dataset as EDF files and CSV hypnograms into `dir`,
/// plus a `pipeline.toml` listing them on top of `base`. Returns that config.
pub fn write_synthetic_dataset(dir: &Path, synth: &SynthConfig, base: &PipelineConfig) -> Result<PipelineConfig> {
    let subjects = generate(synth)?;
    let mut cfg = base.clone();
    cfg.channels.names = synth.channels.clone();
    cfg.paths.input_dir = dir.to_path_buf();
    cfg.paths.output_dir = dir.join("out");
    cfg.recordings.clear();
    for s in &subjects {
        for n in &s.nights {
            let psg = format!("{}.edf", n.id);
            let hyp = format!("{}.hyp.csv", n.id);
            artifacts::write_file(&dir.join(&psg), &write_edf(&n.recording, 30.0)?)?;
            artifacts::write_file(&dir.join(&hyp), hypnogram_csv(&n.hypnogram).as_bytes())?;
            cfg.recordings.push(RecordingSpec {
                id: n.id.clone(),
                subject: s.id.clone(),
                age: s.age,
                psg: psg.into(),
                hypnogram: hyp.into(),
                wake_margin_min: None,
            });
        }
    }
    cfg.validate()?;
    // the file lives in `dir`, so its paths are relative to it
    let mut portable = cfg.clone();
    portable.paths.input_dir = ".".into();
    portable.paths.output_dir = "out".into();
    artifacts::write_file(&dir.join("pipeline.toml"), portable.to_toml().as_bytes())?;
    Ok(cfg)
}
