use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{CvConfig, TrainConfig};
use crate::geometry::{DiagonalPolicy, DimSelect};
use crate::tfa::{BandSet, StftParams};

/// Environment variable that overrides `paths.output_dir`.
pub const OUTPUT_DIR_ENV: &str = "SLEEPGEOM_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Base for relative recording paths.
    pub input_dir: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            input_dir: PathBuf::from("."),
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordingSpec {
    pub id: String,
    pub subject: String,
    /// Subject age in years.
    pub age: f64,
    pub psg: PathBuf,
    pub hypnogram: PathBuf,
    /// Overrides the global wake margin for this recording.
    #[serde(default)]
    pub wake_margin_min: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelMode {
    /// Both channels, fused into the common feature.
    #[default]
    Fused,
    /// First channel only; its diffusion map is the final feature.
    Single,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    /// The alternating product multiplies the first channel's operator on the left.
    pub names: [String; 2],
    pub mode: ChannelMode,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            names: ["Fpz-Cz".into(), "Pz-Oz".into()],
            mode: ChannelMode::Fused,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TfaConfig {
    /// Window support in samples.
    pub window_len: usize,
    /// Gaussian scale in samples; defaults to `window_len / 10`.
    pub sigma: Option<f64>,
    pub num_bins: usize,
    /// Highest stored frequency in Hz; `None` keeps all bins.
    pub max_freq: Option<f64>,
    /// Use every `hop`-th STFT column.
    pub hop: usize,
    pub bands: BandSet,
}

impl Default for TfaConfig {
    fn default() -> Self {
        TfaConfig {
            window_len: 1001,
            sigma: None,
            num_bins: 4004,
            max_freq: Some(50.0),
            hop: 1,
            bands: BandSet::default(),
        }
    }
}

impl TfaConfig {
    pub fn params(&self, tau: f64) -> StftParams {
        StftParams {
            tau,
            window_len: self.window_len,
            sigma: self.sigma.unwrap_or(self.window_len as f64 / 10.0),
            num_bins: self.num_bins,
            max_freq: self.max_freq,
        }
    }
}

/// Which epochs share one embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    /// One graph per recording.
    #[default]
    Recording,
    /// One graph over the epochs of all configured recordings.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    /// Neighbourhood size as a fraction of the number of epochs.
    pub alpha: f64,
    /// Rank kept in the local covariance pseudo-inverse.
    pub d: usize,
    pub eps_quantile: f64,
    pub t: f64,
    pub d_hat: usize,
    /// When set, keep the eigenvectors with `lambda^t > threshold`, at most `d_hat`.
    pub threshold: Option<f64>,
    pub diagonal: DiagonalPolicy,
    pub scope: Scope,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            alpha: 0.1,
            d: 7,
            eps_quantile: 0.05,
            t: 1.0,
            d_hat: 10,
            threshold: None,
            diagonal: DiagonalPolicy::Zero,
            scope: Scope::Recording,
        }
    }
}

impl GeometryConfig {
    pub fn dims(&self) -> DimSelect {
        match self.threshold {
            Some(delta) => DimSelect::Threshold { delta, max: self.d_hat },
            None => DimSelect::Fixed { d: self.d_hat },
        }
    }
}

/// Affinities behind the per-channel transition matrices of the alternating product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdmAffinity {
    #[default]
    LocalMd,
    Euclidean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub d_tilde: usize,
    pub adm_affinity: AdmAffinity,
    /// Kernel bandwidth quantile for the diffusion map of the common metric;
    /// defaults to `geometry.eps_quantile`.
    pub adm_eps_quantile: Option<f64>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            d_tilde: 10,
            adm_affinity: AdmAffinity::LocalMd,
            adm_eps_quantile: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Losocv,
    Kfold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub k_hat: usize,
    pub scheme: Scheme,
    pub folds: usize,
    pub codebook_size: usize,
    pub smoothing: f64,
    pub class_balance: bool,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            k_hat: 9,
            scheme: Scheme::Losocv,
            folds: 5,
            codebook_size: 64,
            smoothing: 1.0,
            class_balance: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub channels: ChannelConfig,
    pub tfa: TfaConfig,
    pub geometry: GeometryConfig,
    pub fusion: FusionConfig,
    pub evaluation: EvaluationConfig,
    /// Minutes of wake kept before the first and after the last sleep epoch.
    pub wake_margin_min: f64,
    pub seed: u64,
    pub recordings: Vec<RecordingSpec>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            paths: Paths::default(),
            channels: ChannelConfig::default(),
            tfa: TfaConfig::default(),
            geometry: GeometryConfig::default(),
            fusion: FusionConfig::default(),
            evaluation: EvaluationConfig::default(),
            wake_margin_min: 30.0,
            seed: 0,
            recordings: Vec::new(),
        }
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl PipelineConfig {
    /// Parses TOML and validates. Relative `input_dir` and `output_dir` are
    /// resolved against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| bad(format!("config: {e}")))?;
        for p in [&mut cfg.paths.input_dir, &mut cfg.paths.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; `SLEEPGEOM_OUTPUT_DIR` replaces the output directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::from_toml(&text, base)?;
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            cfg.paths.output_dir = PathBuf::from(dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tfa;
        if t.hop == 0 {
            return Err(bad("tfa.hop must be at least 1"));
        }
        // the sampling interval is only known per recording; check the rest with 10 ms
        t.params(0.01).validate().map_err(|e| bad(format!("tfa: {e}")))?;
        t.bands.validate()?;
        let g = &self.geometry;
        if !(g.alpha > 0.0 && g.alpha < 1.0) {
            return Err(bad(format!("geometry.alpha = {} must lie in (0, 1)", g.alpha)));
        }
        if g.d == 0 || g.d > t.bands.dim() {
            return Err(bad(format!("geometry.d = {} must lie in [1, {}]", g.d, t.bands.dim())));
        }
        if !(g.eps_quantile > 0.0 && g.eps_quantile <= 1.0) {
            return Err(bad(format!("geometry.eps_quantile = {} must lie in (0, 1]", g.eps_quantile)));
        }
        if !(g.t > 0.0 && g.t.is_finite()) {
            return Err(bad(format!("geometry.t = {} must be positive", g.t)));
        }
        if g.d_hat == 0 {
            return Err(bad("geometry.d_hat must be at least 1"));
        }
        if let Some(th) = g.threshold {
            if !(th > 0.0 && th < 1.0) {
                return Err(bad(format!("geometry.threshold = {th} must lie in (0, 1)")));
            }
        }
        if let Some(q) = self.fusion.adm_eps_quantile {
            if !(q > 0.0 && q <= 1.0) {
                return Err(bad(format!("fusion.adm_eps_quantile = {q} must lie in (0, 1]")));
            }
        }
        if self.fusion.d_tilde == 0 {
            return Err(bad("fusion.d_tilde must be at least 1"));
        }
        let e = &self.evaluation;
        if e.k_hat == 0 {
            return Err(bad("evaluation.k_hat must be at least 1"));
        }
        if e.codebook_size == 0 || !e.codebook_size.is_power_of_two() {
            return Err(bad(format!("evaluation.codebook_size = {} must be a power of two", e.codebook_size)));
        }
        if !(e.smoothing >= 0.0 && e.smoothing.is_finite()) {
            return Err(bad(format!("evaluation.smoothing = {} must be nonnegative", e.smoothing)));
        }
        if e.scheme == Scheme::Kfold && e.folds < 2 {
            return Err(bad(format!("evaluation.folds = {} must be at least 2", e.folds)));
        }
        if !(self.wake_margin_min >= 0.0) {
            return Err(bad(format!("wake_margin_min = {} must be nonnegative", self.wake_margin_min)));
        }
        if self.channels.names[0] == self.channels.names[1] && self.channels.mode == ChannelMode::Fused {
            return Err(bad("fusion needs two distinct channels"));
        }
        let mut ids = std::collections::BTreeSet::new();
        let mut ages = std::collections::BTreeMap::new();
        for r in &self.recordings {
            if r.id.is_empty() || r.id.contains(['/', '\\']) {
                return Err(bad(format!("recording id '{}' is not a valid file stem", r.id)));
            }
            if !ids.insert(r.id.as_str()) {
                return Err(bad(format!("duplicate recording id {}", r.id)));
            }
            if !(r.age > 0.0) {
                return Err(bad(format!("recording {}: age must be positive", r.id)));
            }
            if let Some(&a) = ages.get(r.subject.as_str()) {
                if a != r.age {
                    return Err(bad(format!("subject {} has conflicting ages {a} and {}", r.subject, r.age)));
                }
            }
            ages.insert(r.subject.as_str(), r.age);
            if let Some(m) = r.wake_margin_min {
                if !(m >= 0.0) {
                    return Err(bad(format!("recording {}: wake_margin_min must be nonnegative", r.id)));
                }
            }
        }
        Ok(())
    }

    /// Checks that the configured subjects can support the evaluation scheme,
    /// so that `evaluate` fails before any feature extraction.
    pub fn check_evaluation(&self) -> Result<()> {
        let n = self.recordings.iter().map(|r| r.subject.as_str()).collect::<std::collections::BTreeSet<_>>().len();
        let e = &self.evaluation;
        match e.scheme {
            Scheme::Losocv if n < e.k_hat + 1 => Err(bad(format!("LOSOCV with evaluation.k_hat = {} needs at least {} subjects, have {n}", e.k_hat, e.k_hat + 1))),
            Scheme::Kfold if e.folds > n => Err(bad(format!("evaluation.folds = {} exceeds the {n} subjects", e.folds))),
            Scheme::Kfold if e.k_hat > n - n.div_ceil(e.folds) => Err(bad(format!(
                "evaluation.k_hat = {} exceeds the {} subjects outside the largest of {} folds",
                e.k_hat,
                n - n.div_ceil(e.folds),
                e.folds
            ))),
            _ => Ok(()),
        }
    }

    pub fn recording(&self, id: &str) -> Result<&RecordingSpec> {
        self.recordings
            .iter()
            .find(|r| r.id == id)
            .ok_or_else(|| bad(format!("no recording with id {id} in the config")))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.paths.input_dir.join(p)
        }
    }

    /// Channels that feed the features and embeddings.
    pub fn active_channels(&self) -> &[String] {
        match self.channels.mode {
            ChannelMode::Fused => &self.channels.names,
            ChannelMode::Single => &self.channels.names[..1],
        }
    }

    pub fn cv_config(&self) -> CvConfig {
        CvConfig {
            k_hat: self.evaluation.k_hat,
            seed: self.seed,
            train: self.train_config(),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            codebook_size: self.evaluation.codebook_size,
            smoothing: self.evaluation.smoothing,
            class_balance: self.evaluation.class_balance,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = PipelineConfig::from_toml("", Path::new("/base")).unwrap();
        assert_eq!(c.geometry.d_hat, 10);
        assert_eq!(c.fusion.d_tilde, 10);
        assert_eq!(c.evaluation.k_hat, 9);
        assert_eq!(c.channels.names, ["Fpz-Cz".to_string(), "Pz-Oz".to_string()]);
        assert_eq!(c.paths.output_dir, PathBuf::from("/base/out"));
        assert_eq!(c.tfa.params(0.01).sigma, 100.1);
    }

    #[test]
    fn round_trip_through_toml() {
        let mut c = PipelineConfig::default();
        c.recordings.push(RecordingSpec {
            id: "r1".into(),
            subject: "s1".into(),
            age: 30.0,
            psg: "a.edf".into(),
            hypnogram: "a.csv".into(),
            wake_margin_min: Some(90.0),
        });
        c.geometry.scope = Scope::Pooled;
        c.geometry.threshold = Some(0.1);
        c.fusion.adm_affinity = AdmAffinity::Euclidean;
        let back = PipelineConfig::from_toml(&c.to_toml(), Path::new("/")).unwrap();
        assert_eq!(back.recordings, c.recordings);
        assert_eq!(back.geometry, c.geometry);
        assert_eq!(back.fusion, c.fusion);
    }

    #[test]
    fn invalid_values_are_usage_errors() {
        for doc in [
            "[geometry]\nalpha = 0.0",
            "[geometry]\neps_quantile = 1.5",
            "[evaluation]\ncodebook_size = 48",
            "[tfa]\nhop = 0",
            "[tfa]\nwindow_len = 5000",
            "wake_margin_min = -1.0",
            "[geometry]\nunknown_key = 1",
            "[[recordings]]\nid = \"a\"\nsubject = \"s\"\nage = 0.0\npsg = \"x\"\nhypnogram = \"y\"",
        ] {
            let e = PipelineConfig::from_toml(doc, Path::new(".")).unwrap_err();
            assert_eq!(e.kind(), crate::ErrorKind::Usage, "{doc}");
        }
    }

    #[test]
    fn conflicting_subject_ages() {
        let doc = r#"
[[recordings]]
id = "a"
subject = "s"
age = 30.0
psg = "a.edf"
hypnogram = "a.csv"

[[recordings]]
id = "b"
subject = "s"
age = 31.0
psg = "b.edf"
hypnogram = "b.csv"
"#;
        assert!(PipelineConfig::from_toml(doc, Path::new(".")).is_err());
    }
}
