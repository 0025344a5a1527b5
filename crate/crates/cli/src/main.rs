//! `sleepgeom` batch front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 input data
//! error, 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sleepgeom::eval::CvReport;
use sleepgeom::pipeline::{self, ChannelMode, PipelineConfig, RunManifest, Scheme, Scope};
use sleepgeom::synth::SynthConfig;
use sleepgeom::{Error, ErrorKind, SleepStage};

#[derive(Parser)]
#[command(name = "sleepgeom", version, about = "Sleep stage annotation from EEG with diffusion geometry and sensor fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Overrides paths.output_dir and SLEEPGEOM_OUTPUT_DIR.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    scope: Option<ScopeArg>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    Recording,
    Pooled,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Fused,
    Single,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Losocv,
    Kfold,
}

#[derive(Subcommand)]
enum Command {
    /// Segment recordings and write band-energy features.
    Features(Common),
    /// Diffusion-map embedding of every channel.
    Embed(Common),
    /// Fuse the two channels into common features.
    Fuse(Common),
    /// Train one HMM and write model.json.
    Train {
        #[command(flatten)]
        common: Common,
        /// Training subject ids; all subjects when omitted.
        #[arg(long = "subject")]
        subjects: Vec<String>,
        #[arg(long)]
        codebook_size: Option<usize>,
    },
    /// Decode recordings with a saved model.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// Recording ids; all recordings when omitted.
        #[arg(long = "recording")]
        recordings: Vec<String>,
    },
    /// Cross-validated evaluation.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k_hat: Option<usize>,
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        codebook_size: Option<usize>,
    },
    /// Export epoch-averaged synchrosqueezed spectra.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long = "recording")]
        recordings: Vec<String>,
    },
    /// Write a synthetic dataset and a matching pipeline.toml.
    Synth {
        /// Target directory.
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 6)]
        subjects: usize,
        #[arg(long, default_value_t = 1)]
        nights: usize,
        #[arg(long, default_value_t = 90)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load(c: &Common) -> Result<PipelineConfig, Error> {
    let mut cfg = PipelineConfig::load(&c.config)?;
    if let Some(d) = &c.output_dir {
        cfg.paths.output_dir = d.clone();
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(s) = c.scope {
        cfg.geometry.scope = match s {
            ScopeArg::Recording => Scope::Recording,
            ScopeArg::Pooled => Scope::Pooled,
        };
    }
    if let Some(m) = c.mode {
        cfg.channels.mode = match m {
            ModeArg::Fused => ChannelMode::Fused,
            ModeArg::Single => ChannelMode::Single,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn finish(cfg: &PipelineConfig, manifest: RunManifest) {
    println!("seed {}", cfg.seed);
    for (stage, secs) in &manifest.timings {
        log::info!("{stage}: {secs:.2} s");
    }
    println!("wrote {} files below {}", manifest.outputs.len(), cfg.paths.output_dir.display());
}

fn print_report(r: &CvReport) {
    println!("scheme {}  seed {}  k_hat {}  folds {}", r.scheme, r.seed, r.k_hat, r.folds.len());
    let names: Vec<&str> = SleepStage::ALL.iter().map(|s| s.name()).collect();
    println!("{:>8} {}", "truth", names.iter().map(|n| format!("{n:>8}")).collect::<String>());
    for (i, row) in r.pooled_confusion.counts.iter().enumerate() {
        println!("{:>8} {}", names[i], row.iter().map(|c| format!("{c:>8}")).collect::<String>());
    }
    for c in &r.pooled.per_class {
        let f = |x: Option<f64>| x.map_or("     n/a".to_string(), |v| format!("{v:8.4}"));
        println!("{:>8} PR {} RE {} F1 {}", c.stage.name(), f(c.precision), f(c.recall), f(c.f1));
    }
    println!("ACC {:.4}  MF1 {:.4}  kappa {:.4}", r.pooled.accuracy, r.pooled.macro_f1, r.pooled.kappa);
    if let Some(n) = &r.per_night {
        println!(
            "per night ({}): ACC {:.4} +/- {:.4}  MF1 {:.4} +/- {:.4}  kappa {:.4} +/- {:.4}",
            n.nights, n.accuracy.mean, n.accuracy.sd, n.macro_f1.mean, n.macro_f1.sd, n.kappa.mean, n.kappa.sd
        );
    }
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Features(c) => {
            let cfg = load(&c)?;
            finish(&cfg, pipeline::cmd_features(&cfg)?);
        }
        Command::Embed(c) => {
            let cfg = load(&c)?;
            finish(&cfg, pipeline::cmd_embed(&cfg)?);
        }
        Command::Fuse(c) => {
            let cfg = load(&c)?;
            finish(&cfg, pipeline::cmd_fuse(&cfg)?);
        }
        Command::Train { common, subjects, codebook_size } => {
            let mut cfg = load(&common)?;
            if let Some(k) = codebook_size {
                cfg.evaluation.codebook_size = k;
            }
            cfg.validate()?;
            let (model, m) = pipeline::cmd_train(&cfg, &subjects)?;
            println!("codebook size {}", model.codebook.size());
            finish(&cfg, m);
        }
        Command::Predict { common, model, recordings } => {
            let cfg = load(&common)?;
            finish(&cfg, pipeline::cmd_predict(&cfg, &model, &recordings)?);
        }
        Command::Evaluate {
            common,
            k_hat,
            scheme,
            folds,
            codebook_size,
        } => {
            let mut cfg = load(&common)?;
            if let Some(k) = k_hat {
                cfg.evaluation.k_hat = k;
            }
            if let Some(s) = scheme {
                cfg.evaluation.scheme = match s {
                    SchemeArg::Losocv => Scheme::Losocv,
                    SchemeArg::Kfold => Scheme::Kfold,
                };
            }
            if let Some(f) = folds {
                cfg.evaluation.folds = f;
            }
            if let Some(k) = codebook_size {
                cfg.evaluation.codebook_size = k;
            }
            cfg.validate()?;
            let (report, m) = pipeline::cmd_evaluate(&cfg)?;
            print_report(&report);
            finish(&cfg, m);
        }
        Command::Export { common, recordings } => {
            let cfg = load(&common)?;
            finish(&cfg, pipeline::cmd_export(&cfg, &recordings)?);
        }
        Command::Synth {
            dir,
            subjects,
            nights,
            epochs,
            seed,
        } => {
            let synth = SynthConfig {
                subjects,
                nights,
                epochs_per_night: epochs,
                seed,
                ..Default::default()
            };
            let cfg = pipeline::write_synthetic_dataset(&dir, &synth, &synthetic_base())?;
            println!("seed {seed}");
            println!("wrote {} recordings and {}", cfg.recordings.len(), Path::new(&dir).join("pipeline.toml").display());
        }
    }
    Ok(())
}

/// Settings that suit the short, low-rate synthetic recordings.
fn synthetic_base() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.tfa.num_bins = 1024;
    cfg.tfa.hop = 10;
    cfg.geometry.scope = Scope::Pooled;
    cfg.fusion.adm_eps_quantile = Some(0.8);
    cfg.evaluation.k_hat = 5;
    cfg.evaluation.codebook_size = 16;
    cfg
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numerical => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                let s_msg = s.to_string();
                if !msg.contains(&s_msg) {
                    msg.push_str(": ");
                    msg.push_str(&s_msg);
                }
                src = s.source();
            }
            eprintln!("error: {msg}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
