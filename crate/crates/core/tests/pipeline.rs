use std::path::Path;

use sleepgeom::pipeline::{cmd_embed, cmd_evaluate, cmd_features, write_synthetic_dataset, Pipeline, PipelineConfig, Scope};
use sleepgeom::synth::SynthConfig;

fn base() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.tfa.num_bins = 1024;
    cfg.tfa.hop = 10;
    cfg.geometry.scope = Scope::Pooled;
    cfg.fusion.adm_eps_quantile = Some(0.8);
    cfg.evaluation.k_hat = 2;
    cfg.evaluation.codebook_size = 8;
    cfg
}

fn dataset(dir: &Path) -> PipelineConfig {
    let synth = SynthConfig {
        subjects: 4,
        epochs_per_night: 90,
        seed: 5,
        ..Default::default()
    };
    write_synthetic_dataset(dir, &synth, &base()).unwrap()
}

fn wrote(outputs: &[std::path::PathBuf], stage: &str) -> usize {
    outputs.iter().filter(|p| p.parent().and_then(|d| d.file_name()).is_some_and(|n| n == stage)).count()
}

#[test]
fn evaluate_is_reproducible_and_reuses_cached_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = dataset(tmp.path());
    let report = cfg.paths.output_dir.join("evaluate").join("report.json");

    let (first, m1) = cmd_evaluate(&cfg).unwrap();
    assert_eq!(wrote(&m1.outputs, "features"), 8);
    assert_eq!(wrote(&m1.outputs, "fuse"), 16);
    assert_eq!(first.folds.len(), 4);
    let bytes = std::fs::read(&report).unwrap();

    // everything upstream is cached on the second run
    let (_, m2) = cmd_evaluate(&cfg).unwrap();
    assert_eq!(wrote(&m2.outputs, "features"), 0);
    assert_eq!(wrote(&m2.outputs, "fuse"), 0);
    assert_eq!(std::fs::read(&report).unwrap(), bytes);

    // removed downstream artifacts are rebuilt to the same bytes
    let fused = std::fs::read(cfg.paths.output_dir.join("fuse").join("SYN01N1.csv")).unwrap();
    std::fs::remove_dir_all(cfg.paths.output_dir.join("fuse")).unwrap();
    std::fs::remove_dir_all(cfg.paths.output_dir.join("evaluate")).unwrap();
    let (_, m3) = cmd_evaluate(&cfg).unwrap();
    assert_eq!(wrote(&m3.outputs, "features"), 0);
    assert_eq!(wrote(&m3.outputs, "fuse"), 16);
    assert_eq!(std::fs::read(cfg.paths.output_dir.join("fuse").join("SYN01N1.csv")).unwrap(), fused);
    assert_eq!(std::fs::read(&report).unwrap(), bytes);
}

#[test]
fn cache_keys_follow_the_settings_each_stage_reads() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = dataset(tmp.path());
    cfg.recordings.truncate(1);
    cfg.geometry.eps_quantile = 0.3;
    let run = |cfg: &PipelineConfig| {
        let mut p = Pipeline::new("embed", cfg);
        p.embed(false).unwrap();
        let m = p.finish().unwrap();
        (wrote(&m.outputs, "features"), wrote(&m.outputs, "embed"))
    };
    assert_eq!(run(&cfg), (2, 2));
    assert_eq!(run(&cfg), (0, 0));
    cfg.evaluation.codebook_size = 4;
    assert_eq!(run(&cfg), (0, 0));
    cfg.geometry.d = 5;
    assert_eq!(run(&cfg), (0, 2));
    cfg.tfa.hop = 5;
    assert_eq!(run(&cfg), (2, 2));
    // the stage commands always recompute their own stage
    assert_eq!(wrote(&cmd_features(&cfg).unwrap().outputs, "features"), 2);
    assert_eq!(wrote(&cmd_embed(&cfg).unwrap().outputs, "embed"), 2);
}

#[test]
fn evaluation_preflight_rejects_small_pools() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = dataset(tmp.path());
    cfg.evaluation.k_hat = 4;
    let err = cmd_evaluate(&cfg).unwrap_err();
    assert_eq!(err.kind(), sleepgeom::ErrorKind::Usage);
    assert!(!cfg.paths.output_dir.join("features").exists());
}

#[test]
fn readme_config_example_parses() {
    let readme = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../README.md")).unwrap();
    let start = readme.find("```toml\n").unwrap() + 8;
    let block = &readme[start..start + readme[start..].find("```").unwrap()];
    let cfg = PipelineConfig::from_toml(block, Path::new("/data")).unwrap();
    assert_eq!(cfg.recordings.len(), 1);
    assert_eq!(cfg.paths.output_dir, Path::new("/data/out"));
    assert_eq!(cfg.evaluation, PipelineConfig::default().evaluation);
    assert_eq!(cfg.geometry, PipelineConfig::default().geometry);
}
