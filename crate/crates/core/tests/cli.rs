use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use texgen::checkpoint::save_checkpoint;
use texgen::config::RunConfig;
use texgen::training::TrainingState;

const TINY: &str = r#"
seed = 4
corpus_textures = 2
corpus_image_size = 64
latent_dim = 8
train_resolution = 32
tb_cutoff_resolution = 8
channels = [8, 8, 4, 4]
textons_per_module = 4
mapping_layers = 1
textures_per_batch = 2
crops_per_texture = 1
total_g_iterations = 2
checkpoint_every = 0
sample_every = 0
tipp_latent_codes = 2
tipp_samples_per_code = 3
tipp_repeats = 2
fid_samples = 6
inversion_iterations = 3
inversion_init_samples = 8
extractor_widths = [4, 4, 8, 8]
"#;

struct Env {
    dir: tempfile::TempDir,
}

impl Env {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus");
        std::fs::write(dir.path().join("tiny.toml"), format!("corpus_dir = {:?}\n{TINY}", corpus)).unwrap();
        Env { dir }
    }

    fn path(&self, p: &str) -> PathBuf {
        self.dir.path().join(p)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_texgen"))
            .arg("--config")
            .arg(self.path("tiny.toml"))
            .args(args)
            .env("TEXGEN_OUTPUT_ROOT", self.path("runs"))
            .env("RUST_LOG", "warn")
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) {
        let out = self.run(args);
        assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    }

    fn train(&self) -> PathBuf {
        self.ok(&["corpus", "build"]);
        self.ok(&["--out", self.path("train").to_str().unwrap(), "train"]);
        self.path("train/final.ckpt")
    }
}

fn png_size(p: &Path) -> (u32, u32) {
    let img = image::open(p).unwrap();
    (img.width(), img.height())
}

#[test]
fn train_then_sample_is_deterministic() {
    let env = Env::new();
    let ck = env.train();
    assert!(env.path("train/config.toml").exists());
    let log = std::fs::read_to_string(env.path("train/losses.csv")).unwrap();
    assert!(log.starts_with("iteration,d_loss,g_loss,gp\n"));
    assert_eq!(log.lines().count(), 3);
    for out in ["s1", "s2"] {
        env.ok(&["--out", env.path(out).to_str().unwrap(), "sample", "--checkpoint", ck.to_str().unwrap(), "--count", "4", "--seed", "7"]);
    }
    for f in ["sample0000.png", "sample0003.png", "samplegrid.png"] {
        assert_eq!(std::fs::read(env.path("s1").join(f)).unwrap(), std::fs::read(env.path("s2").join(f)).unwrap());
    }
    // snapshot replays the same config
    let snap = std::fs::read_to_string(env.path("s1/config.toml")).unwrap();
    let again = RunConfig::parse(&snap, &[]).unwrap();
    assert_eq!(again.seed, 4);
}

#[test]
fn sampling_at_double_resolution() {
    let env = Env::new();
    let ck = env.train();
    env.ok(&["--out", env.path("big").to_str().unwrap(), "sample", "--checkpoint", ck.to_str().unwrap(), "--count", "2", "--resolution", "64"]);
    assert_eq!(png_size(&env.path("big/sample0000.png")), (64, 64));
    let out = env.run(&["sample", "--checkpoint", ck.to_str().unwrap(), "--resolution", "48"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tipp_of_deterministic_model_is_one() {
    let env = Env::new();
    // untrained: zero noise gains, and fixed phase removes the only other randomness
    let cfg = RunConfig::load(Some(&env.path("tiny.toml")), &["fixed_phase=true".into()]).unwrap();
    let st = TrainingState::new(cfg.generator_config(), cfg.critic_config(), cfg.train_config()).unwrap();
    let ck = env.path("det.ckpt");
    save_checkpoint(&ck, &st.checkpoint()).unwrap();
    env.ok(&["--set", "fixed_phase=true", "--out", env.path("m").to_str().unwrap(), "metrics", "tipp", "--checkpoint", ck.to_str().unwrap()]);
    let csv = std::fs::read_to_string(env.path("m/tipp.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    for row in rows {
        let cols: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(cols[1], 1.0);
    }
}

#[test]
fn metrics_invert_and_interpolate_write_outputs() {
    let env = Env::new();
    let ck = env.train();
    let ck = ck.to_str().unwrap();
    env.ok(&["--out", env.path("fid").to_str().unwrap(), "metrics", "fid", "--checkpoint", ck]);
    let fid: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(env.path("fid/fid.json")).unwrap()).unwrap();
    assert!(fid["fid"].as_f64().unwrap() >= 0.0);
    env.ok(&["--out", env.path("sig").to_str().unwrap(), "metrics", "sigma-maps", "--checkpoint", ck, "--maps", "2"]);
    assert!(env.path("sig/sigma001.png").exists());
    env.ok(&["--out", env.path("dt").to_str().unwrap(), "metrics", "tipp"]);
    assert!(env.path("dt/tipp.json").exists());

    let target = std::fs::read_dir(env.path("corpus")).unwrap().map(|e| e.unwrap().path()).find(|p| p.extension().is_some_and(|e| e == "png")).unwrap();
    env.ok(&["--out", env.path("inv").to_str().unwrap(), "invert", "--checkpoint", ck, "--target", target.to_str().unwrap(), "--loss", "l2"]);
    assert_eq!(std::fs::read_to_string(env.path("inv/loss.csv")).unwrap().lines().count(), 4);
    let w = env.path("inv/w.json");
    env.ok(&["--out", env.path("lerp").to_str().unwrap(), "interpolate", "--checkpoint", ck, "--steps", "3", "--space", "z"]);
    assert!(env.path("lerp/frame0002.png").exists());
    env.ok(&["--out", env.path("lerpw").to_str().unwrap(), "interpolate", "--checkpoint", ck, "--from-w", w.to_str().unwrap(), "--to-w", w.to_str().unwrap(), "--steps", "2"]);
    assert_eq!(png_size(&env.path("lerpw/strip.png")), (64, 32));
}

#[test]
fn exit_codes() {
    let env = Env::new();
    // unknown config key
    assert_eq!(env.run(&["--set", "bogus=1", "corpus", "build"]).status.code(), Some(2));
    // invalid flag value, rejected before any work
    assert_eq!(env.run(&["interpolate", "--checkpoint", "x", "--steps", "1"]).status.code(), Some(2));
    assert!(!env.path("runs").exists());
    // missing data
    assert_eq!(env.run(&["sample", "--checkpoint", env.path("nope.ckpt").to_str().unwrap()]).status.code(), Some(3));
    // training without a corpus
    assert_eq!(env.run(&["train"]).status.code(), Some(3));
}

#[test]
fn timestamped_run_dirs_under_output_root() {
    let env = Env::new();
    env.ok(&["corpus", "build"]);
    let runs: Vec<_> = std::fs::read_dir(env.path("runs")).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert_eq!(runs.len(), 1);
    assert!(runs[0].starts_with("corpus-"));
    assert!(env.path("corpus/manifest.json").exists());
}
