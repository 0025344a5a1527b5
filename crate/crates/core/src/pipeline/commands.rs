use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use super::artifacts::*;
use super::config::{AdmAffinity, ChannelMode, PipelineConfig, Scope};
use crate::error::{Error, Result};
use crate::eval::{kfold, losocv, train_hmm, CvReport, Night, SubjectRecord};
use crate::fusion::{adm_embed, alternating_diffusion, cocluster_eigvecs, common_feature, common_metric, multiview_operator, CoclusterVectors};
use crate::geometry::{affinity, diffusion_map, euclidean_sq, local_covariances, local_md_sq, transition, AffinityMatrix, Embedding, TransitionMatrix};
use crate::hmm::HmmModel;
use crate::ingest::{parse_edf, parse_hypnogram, segment_epochs, truncate_wake, Hypnogram, Recording, EPOCH_SECONDS};
use crate::stage::SleepStage;
use crate::tfa::export::write_spectrum;
use crate::tfa::{FeatureExtractor, StftEngine, SynchroSpectrum};

use super::config::Scheme;

/// Band features of every active channel for the scored epochs of one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordingFeatures {
    pub epochs: EpochTable,
    /// One matrix per active channel, rows aligned with `epochs`.
    pub channels: Vec<StageMatrix>,
}

/// Outputs of the fusion step for one group of epochs.
#[derive(Debug, Clone)]
pub struct FusedGroup {
    pub adm: Embedding,
    pub cocluster: CoclusterVectors,
    /// Rows `v_j`.
    pub common: DMatrix<f64>,
}

/// File-name-safe form of a channel label.
pub fn channel_slug(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

/// Segments, truncates wake and extracts band features in memory.
pub fn extract_recording(rec: &Recording, hyp: &Hypnogram, cfg: &PipelineConfig, margin_min: f64) -> Result<RecordingFeatures> {
    rec.validate()?;
    let seg = segment_epochs(rec, hyp, EPOCH_SECONDS);
    let kept: Vec<_> = truncate_wake(&seg.epochs, margin_min).into_iter().filter(|e| e.stage().is_some()).collect();
    if kept.is_empty() {
        return Err(Error::InvalidInput("no scored epochs overlap the signal".into()));
    }
    let epochs = EpochTable {
        epoch_index: kept.iter().map(|e| e.index).collect(),
        onset: kept.iter().map(|e| e.onset).collect(),
        stages: kept.iter().map(|e| e.stage().unwrap()).collect(),
    };
    let mut channels = Vec::new();
    for name in cfg.active_channels() {
        let ch = rec
            .channel(name)
            .ok_or_else(|| Error::InvalidInput(format!("channel '{name}' not found")))?;
        let ex = FeatureExtractor::new(cfg.tfa.params(ch.tau()), cfg.tfa.bands.clone())?.with_hop(cfg.tfa.hop);
        let ranges: Vec<_> = kept.iter().map(|e| e.range(ch)).collect();
        let feats = ex
            .extract(&ch.samples, &ranges, &epochs.epoch_index)
            .map_err(|e| e.context(format!("channel {name}")))?;
        let dim = cfg.tfa.bands.dim();
        let flat: Vec<f64> = feats.iter().flat_map(|f| f.u.iter().copied()).collect();
        channels.push(StageMatrix {
            stages: epochs.stages.clone(),
            values: DMatrix::from_row_slice(feats.len(), dim, &flat),
        });
    }
    Ok(RecordingFeatures { epochs, channels })
}

fn with_hint(e: Error, scope: Scope) -> Error {
    match (e.kind(), scope) {
        (crate::ErrorKind::Numerical, Scope::Recording) => {
            e.context("graph construction failed (try a larger geometry.eps_quantile or geometry.alpha, or the pooled scope)")
        }
        (crate::ErrorKind::Numerical, Scope::Pooled) => {
            e.context("graph construction failed (try a larger geometry.eps_quantile, fusion.adm_eps_quantile or geometry.alpha)")
        }
        _ => e,
    }
}

/// Affinity and transition matrix of one channel's features (rows = epochs).
pub fn channel_graph(u: &DMatrix<f64>, cfg: &PipelineConfig, euclidean: bool) -> Result<(AffinityMatrix, TransitionMatrix)> {
    let g = &cfg.geometry;
    let d2 = if euclidean {
        euclidean_sq(u)
    } else {
        let cov = local_covariances(u, g.alpha)?;
        local_md_sq(u, &cov, g.d)?
    };
    let w = affinity(&d2, g.eps_quantile, g.diagonal)?;
    let a = transition(&w)?;
    Ok((w, a))
}

/// Diffusion map of one channel: the intrinsic feature.
pub fn embed_channel(u: &DMatrix<f64>, cfg: &PipelineConfig) -> Result<Embedding> {
    let (_, a) = channel_graph(u, cfg, false)?;
    diffusion_map(&a, cfg.geometry.t, cfg.geometry.dims())
}

/// Alternating-diffusion map and co-clustering of two channels, combined
/// into the common feature.
pub fn fuse_channels(ux: &DMatrix<f64>, uy: &DMatrix<f64>, cfg: &PipelineConfig) -> Result<FusedGroup> {
    let (wx, ax) = channel_graph(ux, cfg, false)?;
    let (wy, ay) = channel_graph(uy, cfg, false)?;
    let (ax, ay) = match cfg.fusion.adm_affinity {
        AdmAffinity::LocalMd => (ax, ay),
        AdmAffinity::Euclidean => (channel_graph(ux, cfg, true)?.1, channel_graph(uy, cfg, true)?.1),
    };
    let g = &cfg.geometry;
    let dist = common_metric(&alternating_diffusion(&ax, &ay)?);
    let q = cfg.fusion.adm_eps_quantile.unwrap_or(g.eps_quantile);
    let adm = adm_embed(&dist, q, g.diagonal, g.t, g.dims())?;
    let cocluster = cocluster_eigvecs(&multiview_operator(&wx.w, &wy.w)?, cfg.fusion.d_tilde)?;
    let common = common_feature(&adm, &cocluster, adm.dim(), cfg.fusion.d_tilde)?;
    Ok(FusedGroup { adm, cocluster, common })
}

fn groups(cfg: &PipelineConfig) -> Vec<Vec<usize>> {
    match cfg.geometry.scope {
        Scope::Recording => (0..cfg.recordings.len()).map(|i| vec![i]).collect(),
        Scope::Pooled if cfg.recordings.is_empty() => vec![],
        Scope::Pooled => vec![(0..cfg.recordings.len()).collect()],
    }
}

fn stack(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = parts.iter().map(|m| m.nrows()).sum();
    let cols = parts[0].ncols();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for m in parts {
        out.view_mut((at, 0), (m.nrows(), cols)).copy_from(*m);
        at += m.nrows();
    }
    out
}

fn split(m: &DMatrix<f64>, sizes: &[usize]) -> Vec<DMatrix<f64>> {
    let mut at = 0;
    sizes
        .iter()
        .map(|&n| {
            let part = m.rows(at, n).into_owned();
            at += n;
            part
        })
        .collect()
}

fn key_of(parts: &impl Serialize) -> String {
    sha256_hex(serde_json::to_string(parts).expect("serializable").as_bytes())
}

/// Runs the pipeline stages against the output directory, reusing cached
/// upstream artifacts whose key still matches.
pub struct Pipeline<'a> {
    pub cfg: &'a PipelineConfig,
    pub manifest: RunManifest,
    out: PathBuf,
}

impl<'a> Pipeline<'a> {
    pub fn new(command: &str, cfg: &'a PipelineConfig) -> Self {
        Pipeline {
            cfg,
            manifest: RunManifest::new(command, cfg),
            out: cfg.paths.output_dir.clone(),
        }
    }

    fn path(&self, stage: &str, file: String) -> PathBuf {
        self.out.join(stage).join(file)
    }

    fn key_matches(&self, stage: &str, id: &str, key: &str, files: &[PathBuf]) -> bool {
        let kp = self.path(stage, format!("{id}.key"));
        std::fs::read_to_string(kp).map(|k| k.trim() == key).unwrap_or(false) && files.iter().all(|f| f.is_file())
    }

    fn write(&mut self, path: PathBuf, contents: &[u8]) -> Result<()> {
        write_file(&path, contents)?;
        self.manifest.outputs.push(path);
        Ok(())
    }

    fn write_key(&mut self, stage: &str, id: &str, key: &str) -> Result<()> {
        let p = self.path(stage, format!("{id}.key"));
        write_file(&p, key.as_bytes())
    }

    fn load_inputs(&mut self, i: usize) -> Result<(Recording, Hypnogram, String)> {
        let spec = &self.cfg.recordings[i];
        let psg_path = self.cfg.resolve(&spec.psg);
        let hyp_path = self.cfg.resolve(&spec.hypnogram);
        let psg = read_file(&psg_path)?;
        let hyp = read_file(&hyp_path)?;
        self.manifest.add_input(&psg_path, &psg);
        self.manifest.add_input(&hyp_path, &hyp);
        let rec = parse_edf(&psg).map_err(|e| e.context(psg_path.display().to_string()))?;
        let hyp_parsed = parse_hypnogram(&hyp).map_err(|e| e.context(hyp_path.display().to_string()))?;
        let key = key_of(&(
            "features",
            sha256_hex(&psg),
            sha256_hex(&hyp),
            &self.cfg.tfa,
            self.cfg.active_channels(),
            spec.wake_margin_min.unwrap_or(self.cfg.wake_margin_min),
        ));
        Ok((rec, hyp_parsed, key))
    }

    fn feature_files(&self, id: &str) -> (PathBuf, Vec<PathBuf>) {
        let chans = self
            .cfg
            .active_channels()
            .iter()
            .map(|c| self.path("features", format!("{id}.{}.csv", channel_slug(c))))
            .collect();
        (self.path("epochs", format!("{id}.csv")), chans)
    }

    /// Features of recording `i`, recomputed when `force` is set or the cache is stale.
    /// Returns the features and their cache key.
    pub fn features(&mut self, i: usize, force: bool) -> Result<(RecordingFeatures, String)> {
        let spec = self.cfg.recordings[i].clone();
        let ctx = |e: Error| e.context(format!("recording {}", spec.id));
        let (rec, hyp, key) = self.load_inputs(i).map_err(ctx)?;
        let (ep_path, ch_paths) = self.feature_files(&spec.id);
        let mut all = ch_paths.clone();
        all.push(ep_path.clone());
        if !force && self.key_matches("features", &spec.id, &key, &all) {
            let epochs = read_epochs_csv(&ep_path)?;
            let channels = ch_paths.iter().map(|p| read_features_csv(p)).collect::<Result<Vec<_>>>()?;
            return Ok((RecordingFeatures { epochs, channels }, key));
        }
        let margin = spec.wake_margin_min.unwrap_or(self.cfg.wake_margin_min);
        let cfg = self.cfg;
        let feats = self
            .manifest
            .time(format!("features {}", spec.id), || extract_recording(&rec, &hyp, cfg, margin))
            .map_err(ctx)?;
        self.write(ep_path, epochs_csv(&feats.epochs).as_bytes())?;
        for (p, m) in ch_paths.into_iter().zip(&feats.channels) {
            self.write(p, features_csv(m).as_bytes())?;
        }
        self.write_key("features", &spec.id, &key)?;
        Ok((feats, key))
    }

    fn all_features(&mut self, force: bool) -> Result<Vec<(RecordingFeatures, String)>> {
        (0..self.cfg.recordings.len()).map(|i| self.features(i, force)).collect()
    }

    fn group_name(&self, g: &[usize]) -> String {
        if g.len() == 1 {
            self.cfg.recordings[g[0]].id.clone()
        } else {
            format!("{} pooled recordings", g.len())
        }
    }

    /// Per-channel diffusion maps; returns the final single-channel features
    /// (the first channel's coordinates) per recording.
    pub fn embed(&mut self, force: bool) -> Result<Vec<(EpochTable, DMatrix<f64>)>> {
        let feats = self.all_features(false)?;
        let chans: Vec<String> = self.cfg.active_channels().to_vec();
        let mut first = vec![None; feats.len()];
        for g in groups(self.cfg) {
            let key = key_of(&("embed", g.iter().map(|&i| &feats[i].1).collect::<Vec<_>>(), &self.cfg.geometry, &chans));
            let files: Vec<Vec<PathBuf>> = g
                .iter()
                .map(|&i| {
                    chans
                        .iter()
                        .map(|c| self.path("embed", format!("{}.{}.csv", self.cfg.recordings[i].id, channel_slug(c))))
                        .collect()
                })
                .collect();
            let fresh = !force && g.iter().zip(&files).all(|(&i, f)| self.key_matches("embed", &self.cfg.recordings[i].id, &key, f));
            if fresh {
                for (&i, f) in g.iter().zip(&files) {
                    first[i] = Some(read_coords_csv(&f[0])?.1.values);
                }
                continue;
            }
            let name = self.group_name(&g);
            let sizes: Vec<usize> = g.iter().map(|&i| feats[i].0.epochs.len()).collect();
            for (c, ch) in chans.iter().enumerate() {
                let parts: Vec<&DMatrix<f64>> = g.iter().map(|&i| &feats[i].0.channels[c].values).collect();
                let u = stack(&parts);
                let cfg = self.cfg;
                let emb = self
                    .manifest
                    .time(format!("embed {name} {ch}"), || embed_channel(&u, cfg))
                    .map_err(|e| with_hint(e, self.cfg.geometry.scope).context(format!("embedding {name}, channel {ch}")))?;
                for ((&i, coords), f) in g.iter().zip(split(&emb.coords, &sizes)).zip(&files) {
                    let text = coords_csv("coord", &feats[i].0.epochs, &coords);
                    self.write(f[c].clone(), text.as_bytes())?;
                    if c == 0 {
                        first[i] = Some(coords);
                    }
                }
            }
            for &i in &g {
                let id = self.cfg.recordings[i].id.clone();
                self.write_key("embed", &id, &key)?;
            }
        }
        Ok(feats.into_iter().zip(first).map(|((f, _), m)| (f.epochs, m.expect("every recording is in a group"))).collect())
    }

    /// Common features per recording, with the scatter exports.
    pub fn fuse(&mut self, force: bool) -> Result<Vec<(EpochTable, DMatrix<f64>)>> {
        if self.cfg.channels.mode == ChannelMode::Single {
            return Err(Error::Config("fusion needs channels.mode = \"fused\"".into()));
        }
        let feats = self.all_features(false)?;
        let mut out = vec![None; feats.len()];
        for g in groups(self.cfg) {
            let key = key_of(&("fuse", g.iter().map(|&i| &feats[i].1).collect::<Vec<_>>(), &self.cfg.geometry, &self.cfg.fusion));
            let names = |p: &Self, i: usize| -> Vec<PathBuf> {
                let id = &p.cfg.recordings[i].id;
                ["", ".adm", ".q_x", ".q_y"].iter().map(|s| p.path("fuse", format!("{id}{s}.csv"))).collect()
            };
            let fresh = !force && g.iter().all(|&i| self.key_matches("fuse", &self.cfg.recordings[i].id, &key, &names(self, i)));
            if fresh {
                for &i in &g {
                    out[i] = Some(read_coords_csv(&names(self, i)[0])?.1.values);
                }
                continue;
            }
            let name = self.group_name(&g);
            let sizes: Vec<usize> = g.iter().map(|&i| feats[i].0.epochs.len()).collect();
            let ux = stack(&g.iter().map(|&i| &feats[i].0.channels[0].values).collect::<Vec<_>>());
            let uy = stack(&g.iter().map(|&i| &feats[i].0.channels[1].values).collect::<Vec<_>>());
            let cfg = self.cfg;
            let fused = self
                .manifest
                .time(format!("fuse {name}"), || fuse_channels(&ux, &uy, cfg))
                .map_err(|e| with_hint(e, self.cfg.geometry.scope).context(format!("fusing {name}")))?;
            let n = ux.nrows();
            let q = &fused.cocluster.q;
            let qx = q.rows(0, n).into_owned();
            let qy = q.rows(n, n).into_owned();
            let pieces = [
                ("v", split(&fused.common, &sizes)),
                ("psi", split(&fused.adm.coords, &sizes)),
                ("q", split(&qx, &sizes)),
                ("q", split(&qy, &sizes)),
            ];
            for (k, &i) in g.iter().enumerate() {
                let files = names(self, i);
                for ((prefix, parts), f) in pieces.iter().zip(files) {
                    let text = coords_csv(prefix, &feats[i].0.epochs, &parts[k]);
                    self.write(f, text.as_bytes())?;
                }
                let id = self.cfg.recordings[i].id.clone();
                self.write_key("fuse", &id, &key)?;
                out[i] = Some(pieces[0].1[k].clone());
            }
        }
        Ok(feats.into_iter().zip(out).map(|((f, _), m)| (f.epochs, m.expect("every recording is in a group"))).collect())
    }

    /// Final per-recording feature: the common feature, or the first channel's
    /// diffusion map in single-channel mode.
    pub fn final_features(&mut self) -> Result<Vec<(EpochTable, DMatrix<f64>)>> {
        match self.cfg.channels.mode {
            ChannelMode::Fused => self.fuse(false),
            ChannelMode::Single => self.embed(false),
        }
    }

    /// Subjects in order of first appearance in the config.
    pub fn subjects(&mut self) -> Result<Vec<SubjectRecord>> {
        let finals = self.final_features()?;
        let mut subjects: Vec<SubjectRecord> = Vec::new();
        for (spec, (epochs, m)) in self.cfg.recordings.iter().zip(finals) {
            let night = Night {
                id: spec.id.clone(),
                features: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
                stages: epochs.stages,
            };
            match subjects.iter_mut().find(|s| s.id == spec.subject) {
                Some(s) => s.nights.push(night),
                None => subjects.push(SubjectRecord {
                    id: spec.subject.clone(),
                    age: spec.age,
                    nights: vec![night],
                }),
            }
        }
        Ok(subjects)
    }

    pub fn finish(mut self) -> Result<RunManifest> {
        let p = self.manifest.write(&self.out)?;
        self.manifest.outputs.push(p);
        Ok(self.manifest)
    }
}

/// `epoch,truth,pred` rows, epochs numbered from the recording start.
pub fn hypnogram_csv(epoch_index: &[usize], truth: &[SleepStage], pred: &[SleepStage]) -> String {
    let mut s = String::from("epoch,truth,pred\n");
    for ((i, t), p) in epoch_index.iter().zip(truth).zip(pred) {
        s.push_str(&format!("{i},{},{}\n", t.code(), p.code()));
    }
    s
}

fn require_recordings(cfg: &PipelineConfig) -> Result<()> {
    if cfg.recordings.is_empty() {
        return Err(Error::Config("the config lists no recordings".into()));
    }
    Ok(())
}

/// Writes `epochs/{id}.csv` and `features/{id}.{channel}.csv` for every recording.
pub fn cmd_features(cfg: &PipelineConfig) -> Result<RunManifest> {
    require_recordings(cfg)?;
    let mut p = Pipeline::new("features", cfg);
    p.all_features(true)?;
    p.finish()
}

/// Writes `embed/{id}.{channel}.csv` diffusion-map coordinates.
pub fn cmd_embed(cfg: &PipelineConfig) -> Result<RunManifest> {
    require_recordings(cfg)?;
    let mut p = Pipeline::new("embed", cfg);
    p.embed(true)?;
    p.finish()
}

/// Writes `fuse/{id}.csv` common features and the `.adm`, `.q_x`, `.q_y` scatter sets.
/// In single-channel mode fusion is skipped.
pub fn cmd_fuse(cfg: &PipelineConfig) -> Result<RunManifest> {
    require_recordings(cfg)?;
    let mut p = Pipeline::new("fuse", cfg);
    if cfg.channels.mode == ChannelMode::Single {
        log::warn!("single-channel mode: fusion skipped, the diffusion map is the final feature");
        p.embed(false)?;
    } else {
        p.fuse(true)?;
    }
    p.finish()
}

/// Trains one model on the given subjects (all when empty) and writes `model.json`.
pub fn cmd_train(cfg: &PipelineConfig, subject_ids: &[String]) -> Result<(HmmModel, RunManifest)> {
    require_recordings(cfg)?;
    let mut p = Pipeline::new("train", cfg);
    let subjects = p.subjects()?;
    for id in subject_ids {
        if !subjects.iter().any(|s| &s.id == id) {
            return Err(Error::Config(format!("unknown subject {id}")));
        }
    }
    let chosen: Vec<&SubjectRecord> = subjects.iter().filter(|s| subject_ids.is_empty() || subject_ids.contains(&s.id)).collect();
    let model = p.manifest.time("train", || train_hmm(&chosen, &cfg.train_config(), cfg.seed))?;
    p.write(cfg.paths.output_dir.join("model.json"), model.to_json()?.as_bytes())?;
    Ok((model, p.finish()?))
}

/// Decodes the given recordings (all when empty) with a saved model and writes
/// `predict/{id}.csv` hypnograms.
pub fn cmd_predict(cfg: &PipelineConfig, model_path: &Path, recording_ids: &[String]) -> Result<RunManifest> {
    require_recordings(cfg)?;
    for id in recording_ids {
        cfg.recording(id)?;
    }
    let mut p = Pipeline::new("predict", cfg);
    let bytes = read_file(model_path)?;
    p.manifest.add_input(model_path, &bytes);
    let text = String::from_utf8(bytes).map_err(|_| Error::Format {
        context: model_path.display().to_string(),
        msg: "not UTF-8".into(),
    })?;
    let model = HmmModel::from_json(&text)?;
    let finals = p.final_features()?;
    for (spec, (epochs, m)) in cfg.recordings.iter().zip(finals) {
        if !recording_ids.is_empty() && !recording_ids.contains(&spec.id) {
            continue;
        }
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        let pred = model.decode(&rows).map_err(|e| e.context(format!("recording {}", spec.id)))?.path;
        let csv = hypnogram_csv(&epochs.epoch_index, &epochs.stages, &pred);
        p.write(cfg.paths.output_dir.join("predict").join(format!("{}.csv", spec.id)), csv.as_bytes())?;
    }
    p.finish()
}

#[derive(Serialize)]
struct ReportFile<'a> {
    config: &'a PipelineConfig,
    report: &'a CvReport,
}

/// Cross validation; writes `evaluate/report.json` and per-night
/// `evaluate/hypnograms/{id}.csv`.
pub fn cmd_evaluate(cfg: &PipelineConfig) -> Result<(CvReport, RunManifest)> {
    require_recordings(cfg)?;
    cfg.check_evaluation()?;
    let mut p = Pipeline::new("evaluate", cfg);
    let subjects = p.subjects()?;
    let cv = cfg.cv_config();
    let report = p.manifest.time("cross validation", || match cfg.evaluation.scheme {
        Scheme::Losocv => losocv(&subjects, &cv),
        Scheme::Kfold => kfold(&subjects, cfg.evaluation.folds, &cv),
    })?;
    let dir = cfg.paths.output_dir.join("evaluate");
    let text = serde_json::to_string_pretty(&ReportFile { config: cfg, report: &report }).expect("serializable");
    p.write(dir.join("report.json"), text.as_bytes())?;
    let epochs: Vec<EpochTable> = (0..cfg.recordings.len()).map(|i| read_epochs_csv(&p.feature_files(&cfg.recordings[i].id).0)).collect::<Result<_>>()?;
    for night in report.folds.iter().flat_map(|f| &f.nights) {
        let i = cfg.recordings.iter().position(|r| r.id == night.night).expect("night ids come from the config");
        let csv = hypnogram_csv(&epochs[i].epoch_index, &night.truth, &night.pred);
        p.write(dir.join("hypnograms").join(format!("{}.csv", night.night)), csv.as_bytes())?;
    }
    Ok((report, p.finish()?))
}

/// Writes the epoch-averaged synchrosqueezed spectrum of every active channel
/// as `export/{id}.{channel}.sst` (one row per kept epoch).
pub fn cmd_export(cfg: &PipelineConfig, recording_ids: &[String]) -> Result<RunManifest> {
    require_recordings(cfg)?;
    for id in recording_ids {
        cfg.recording(id)?;
    }
    let mut p = Pipeline::new("export", cfg);
    for i in 0..cfg.recordings.len() {
        let id = cfg.recordings[i].id.clone();
        if !recording_ids.is_empty() && !recording_ids.contains(&id) {
            continue;
        }
        let (rec, _, _) = p.load_inputs(i).map_err(|e| e.context(format!("recording {id}")))?;
        let (feats, _) = p.features(i, false)?;
        for name in cfg.active_channels() {
            let ch = rec
                .channel(name)
                .ok_or_else(|| Error::InvalidInput(format!("recording {id}: channel '{name}' not found")))?;
            let params = cfg.tfa.params(ch.tau());
            let ex = FeatureExtractor::new(params, cfg.tfa.bands.clone())?.with_hop(cfg.tfa.hop);
            let mut engine = StftEngine::new(params)?;
            let mut values = Vec::new();
            for &onset in &feats.epochs.onset {
                let start = (onset * ch.sampling_rate).round() as usize;
                let range = start..start + (EPOCH_SECONDS * ch.sampling_rate).round() as usize;
                let used = range.clone().step_by(ex.hop).count().max(1) as f64;
                values.extend(ex.epoch_energy(&mut engine, &ch.samples, range).into_iter().map(|e| e / used));
            }
            let s = SynchroSpectrum {
                values,
                start: 0,
                n_times: feats.epochs.len(),
                n_bins: engine.n_bins(),
                params,
            };
            let mut bytes = Vec::new();
            write_spectrum(&s, &mut bytes)?;
            p.write(cfg.paths.output_dir.join("export").join(format!("{id}.{}.sst", channel_slug(name))), &bytes)?;
        }
    }
    p.finish()
}
