//! Command-line interface: argument types and command implementations.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::checkpoint::load_checkpoint;
use crate::config::RunConfig;
use crate::corpus::{build_synthetic_corpus, ingest_image, AdmissionRules, Corpus};
use crate::error::{Error, Result};
use crate::features::FeatureExtractor;
use crate::generator::{Generator, LatentCode, StyleVector};
use crate::image_io::{crop, grid, load_rgb, save_gray, save_rgb, to_signed, to_unit};
use crate::inversion::{interpolate_latent, interpolate_styles, invert, LatentSpace, RandomCrops};
use crate::metrics::{
    fid, stddev_map, tipp_for_dataset, tipp_for_model, write_tipp_csv, Estimate, FeatureStats, TippSummary,
};
use crate::params::Tensor;
use crate::rng::RngStream;
use crate::training::{run, RunWriter, TrainingState};

/// Environment variable naming the directory that holds run directories.
pub const OUTPUT_ROOT_ENV: &str = "TEXGEN_OUTPUT_ROOT";

#[derive(Parser, Debug)]
#[command(name = "texgen", version, about = "Periodic texture GAN with texton broadcasting")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// `key=value` override of a config entry; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Directory under which timestamped run directories are created.
    #[arg(long, global = true, env = OUTPUT_ROOT_ENV, default_value = "runs")]
    pub output_root: PathBuf,

    /// Write outputs to exactly this directory instead of a timestamped one.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Texture corpus management.
    Corpus {
        #[command(subcommand)]
        action: CorpusAction,
    },
    /// Train a model on the corpus in `corpus_dir`.
    Train(TrainArgs),
    /// Render samples from a checkpoint's EMA generator.
    Sample(SampleArgs),
    /// TIPP, FID or σ-maps.
    Metrics(MetricsArgs),
    /// Recover a style vector for a target texture image.
    Invert(InvertArgs),
    /// Render a path between two latents.
    Interpolate(InterpolateArgs),
}

#[derive(Subcommand, Debug)]
pub enum CorpusAction {
    /// Build a corpus: synthetic, or admitted from a directory of images.
    Build {
        /// Ingest every image in this directory instead of synthesizing.
        #[arg(long)]
        from_images: Option<PathBuf>,
        /// License string recorded for ingested images.
        #[arg(long)]
        license: Option<String>,
    },
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub count: usize,
    /// Output side length; an integer multiple of the training resolution.
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MetricKind {
    Tipp,
    Fid,
    SigmaMaps,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    #[arg(value_enum)]
    pub which: MetricKind,
    /// Model to evaluate; TIPP without a checkpoint measures the corpus.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of σ-maps to write.
    #[arg(long, default_value_t = 8)]
    pub maps: usize,
}

#[derive(Args, Debug)]
pub struct InvertArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Target texture image.
    #[arg(long)]
    pub target: PathBuf,
    /// Overrides `inversion_loss`.
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Gram,
    L2,
    Content,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SpaceArg {
    Z,
    W,
}

#[derive(Args, Debug)]
pub struct InterpolateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Seed of the first latent code.
    #[arg(long, default_value_t = 0, conflicts_with = "from_w")]
    pub from_seed: u64,
    #[arg(long, default_value_t = 1, conflicts_with = "to_w")]
    pub to_seed: u64,
    /// Style vector file (JSON, as written by `invert`) for the first endpoint.
    #[arg(long, requires = "to_w")]
    pub from_w: Option<PathBuf>,
    #[arg(long, requires = "from_w")]
    pub to_w: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub steps: usize,
    #[arg(long, value_enum, default_value = "w")]
    pub space: SpaceArg,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Corpus { .. } => "corpus",
        Command::Train(_) => "train",
        Command::Sample(_) => "sample",
        Command::Metrics(_) => "metrics",
        Command::Invert(_) => "invert",
        Command::Interpolate(_) => "interpolate",
    }
}

fn run_dir(cli: &Cli) -> Result<PathBuf> {
    let dir = match &cli.out {
        Some(d) => d.clone(),
        None => {
            let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
            cli.output_root.join(format!("{}-{stamp}-{}", command_name(&cli.command), std::process::id()))
        }
    };
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn save_images(dir: &Path, prefix: &str, images: &[Tensor]) -> Result<()> {
    let unit: Vec<Tensor> = images.iter().map(to_unit).collect();
    for (i, img) in unit.iter().enumerate() {
        save_rgb(&dir.join(format!("{prefix}{i:04}.png")), img)?;
    }
    let cols = (images.len() as f64).sqrt().ceil() as usize;
    save_rgb(&dir.join(format!("{prefix}grid.png")), &grid(&unit, cols)?)
}

fn ema_from(path: &Path) -> Result<Generator> {
    load_checkpoint(path)?.ema_generator()
}

/// Validates the configuration, creates the run directory, writes the config
/// snapshot and dispatches. Returns the run directory.
pub fn execute(cli: &Cli) -> Result<PathBuf> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    check_args(cli)?;
    let dir = run_dir(cli)?;
    cfg.write_snapshot(&dir)?;
    log::info!("run directory {}", dir.display());
    match &cli.command {
        Command::Corpus { action: CorpusAction::Build { from_images, license } } => {
            cmd_corpus_build(&cfg, from_images.as_deref(), license.clone(), &dir)
        }
        Command::Train(a) => cmd_train(&cfg, a, &dir),
        Command::Sample(a) => cmd_sample(a, &dir),
        Command::Metrics(a) => cmd_metrics(&cfg, a, &dir),
        Command::Invert(a) => cmd_invert(&cfg, a, &dir),
        Command::Interpolate(a) => cmd_interpolate(a, &dir),
    }?;
    Ok(dir)
}

/// Flag constraints that need no files.
fn check_args(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Sample(a) if a.count == 0 => Err(Error::InvalidCount("--count must be at least 1".into())),
        Command::Interpolate(a) if a.steps < 2 => Err(Error::InvalidCount("--steps must be at least 2".into())),
        Command::Metrics(a) if a.which != MetricKind::Tipp && a.checkpoint.is_none() => {
            Err(Error::Config(format!("metrics {:?} needs --checkpoint", a.which)))
        }
        Command::Metrics(a) if a.which == MetricKind::SigmaMaps && a.maps == 0 => {
            Err(Error::InvalidCount("--maps must be at least 1".into()))
        }
        _ => Ok(()),
    }
}

fn cmd_corpus_build(cfg: &RunConfig, from: Option<&Path>, license: Option<String>, dir: &Path) -> Result<()> {
    let corpus = match from {
        None => build_synthetic_corpus(cfg.corpus_textures, cfg.train_resolution, cfg.corpus_image_size, cfg.seed)?,
        Some(src) => {
            let rules = AdmissionRules::new(cfg.train_resolution);
            let mut paths: Vec<PathBuf> = std::fs::read_dir(src)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            paths.sort();
            let mut records = Vec::new();
            for p in paths {
                match ingest_image(&p, &rules, license.clone()) {
                    Ok(r) => records.push(r),
                    Err(e @ (Error::Rejected { .. } | Error::Image { .. })) => log::warn!("{}: {e}", p.display()),
                    Err(e) => return Err(e),
                }
            }
            Corpus::new(cfg.train_resolution, cfg.seed, records)?
        }
    };
    let manifest = corpus.save(&cfg.corpus_dir)?;
    write_json(&dir.join("manifest.json"), &manifest)?;
    log::info!("corpus of {} textures in {}", corpus.len(), cfg.corpus_dir.display());
    Ok(())
}

fn cmd_train(cfg: &RunConfig, a: &TrainArgs, dir: &Path) -> Result<()> {
    let corpus = Corpus::load(&cfg.corpus_dir)?;
    let mut state = match &a.resume {
        Some(p) => {
            let ck = load_checkpoint(p)?;
            ck.check_compatible(&cfg.generator_config(), &cfg.critic_config())?;
            let mut st = TrainingState::from_checkpoint(ck);
            st.train.total_g_iterations = cfg.total_g_iterations;
            st
        }
        None => TrainingState::new(cfg.generator_config(), cfg.critic_config(), cfg.train_config())?,
    };
    state.check_corpus(&corpus)?;
    let mut writer = RunWriter::create(dir, cfg.checkpoint_every, cfg.sample_every, cfg.seed)?;
    run(&mut state, &corpus, &mut writer)?;
    Ok(())
}

fn cmd_sample(a: &SampleArgs, dir: &Path) -> Result<()> {
    let g = ema_from(&a.checkpoint)?;
    let res = a.resolution.unwrap_or(g.config().train_resolution);
    g.config().scale_for(res)?;
    let imgs = g.sample_images(&mut RngStream::new(a.seed), a.count, res)?;
    save_images(dir, "sample", &imgs)
}

#[derive(Serialize)]
struct TippReport<'a> {
    source: &'a str,
    summary: &'a TippSummary,
}

fn cmd_metrics(cfg: &RunConfig, a: &MetricsArgs, dir: &Path) -> Result<()> {
    let mut rng = RngStream::new(a.seed);
    match a.which {
        MetricKind::Tipp => {
            let (source, summary) = match &a.checkpoint {
                Some(p) => {
                    let g = ema_from(p)?;
                    let res = a.resolution.unwrap_or(g.config().train_resolution);
                    ("model", tipp_for_model(&g, &cfg.tipp_protocol(), &mut rng, res)?)
                }
                None => {
                    let corpus = Corpus::load(&cfg.corpus_dir)?;
                    let curve = tipp_for_dataset(&corpus, &cfg.tipp_thresholds, 20)?;
                    let values = curve.values.iter().map(|&v| Estimate { mean: v, ci95: 0.0, repeats: 1 }).collect();
                    ("dataset", TippSummary { thresholds: curve.thresholds, values })
                }
            };
            write_tipp_csv(&dir.join("tipp.csv"), &summary)?;
            write_json(&dir.join("tipp.json"), &TippReport { source, summary: &summary })?;
            for (t, e) in summary.thresholds.iter().zip(&summary.values) {
                println!("t = {:.5}  TIPP = {:.4} ± {:.4}", t, e.mean, e.ci95);
            }
        }
        MetricKind::Fid => {
            let g = ema_from(a.checkpoint.as_ref().expect("checked"))?;
            let corpus = Corpus::load(&cfg.corpus_dir)?;
            let r = g.config().train_resolution;
            if corpus.crop_size != r {
                return Err(Error::Config(format!("corpus crops are {}px, model trains at {r}", corpus.crop_size)));
            }
            let n = cfg.fid_samples;
            let extractor = cfg.extractor();
            let mut fakes = Vec::with_capacity(n);
            while fakes.len() < n {
                fakes.extend(g.sample_images(&mut rng, (n - fakes.len()).min(32), r)?);
            }
            let reals: Vec<Tensor> = (0..n)
                .map(|_| {
                    let rec = &corpus.records[rng.below(corpus.len())];
                    let top = rng.below(rec.height() - r + 1);
                    let left = rng.below(rec.width() - r + 1);
                    to_signed(&crop(&rec.image, top, left, r))
                })
                .collect();
            let embed = |imgs: &[Tensor]| -> Result<Vec<Vec<f64>>> {
                let mut rows = Vec::new();
                for chunk in imgs.chunks(32) {
                    rows.extend(extractor.embed(chunk)?);
                }
                Ok(rows)
            };
            let value = fid(&FeatureStats::from_features(&embed(&reals)?)?, &FeatureStats::from_features(&embed(&fakes)?)?)?;
            write_json(&dir.join("fid.json"), &serde_json::json!({ "fid": value, "samples": n }))?;
            println!("FID = {value:.4}");
        }
        MetricKind::SigmaMaps => {
            let g = ema_from(a.checkpoint.as_ref().expect("checked"))?;
            let res = a.resolution.unwrap_or(g.config().train_resolution);
            let d = g.config().latent_dim;
            for i in 0..a.maps {
                let z = LatentCode::sample(d, &mut rng);
                let m = stddev_map(&g, &z, cfg.tipp_samples_per_code, &mut rng, res)?;
                let vals: Vec<f32> = m.sigma.iter().map(|&s| s as f32).collect();
                // full scale at the largest default threshold
                save_gray(&dir.join(format!("sigma{i:03}.png")), &vals, m.h, m.w, 8.0 / 255.0)?;
                write_json(&dir.join(format!("sigma{i:03}.json")), &m)?;
            }
        }
    }
    Ok(())
}

fn cmd_invert(cfg: &RunConfig, a: &InvertArgs, dir: &Path) -> Result<()> {
    let g = ema_from(&a.checkpoint)?;
    let mut icfg = cfg.inversion_config();
    if let Some(l) = a.loss {
        icfg.loss_kind = match l {
            LossArg::Gram => crate::inversion::InversionLoss::Gram,
            LossArg::L2 => crate::inversion::InversionLoss::L2,
            LossArg::Content => crate::inversion::InversionLoss::Content,
        };
    }
    let r = g.config().train_resolution;
    let image = load_rgb(&a.target)?;
    let mut target = RandomCrops::new(image.clone(), r)?;
    let extractor = cfg.extractor();
    let mut rng = RngStream::new(a.seed);
    let result = invert(&g, &mut target, &extractor as &dyn FeatureExtractor, &icfg, &mut rng)?;
    write_json(&dir.join("w.json"), &result.w_star)?;
    let mut csv = String::from("iteration,loss,best\n");
    for (i, (l, b)) in result.loss_trace.iter().zip(&result.best_trace).enumerate() {
        csv.push_str(&format!("{i},{l},{b}\n"));
    }
    std::fs::write(dir.join("loss.csv"), csv)?;
    // target crops beside reconstructions
    let cols = image.shape[2] / r;
    let targets: Vec<Tensor> = (0..(image.shape[1] / r) * cols).take(4).map(|k| crop(&image, (k / cols) * r, (k % cols) * r, r)).collect();
    let wv = autodiff::Var::constant(result.w_star.w.repeat(targets.len()), &[targets.len(), g.config().latent_dim]);
    let recon: Vec<Tensor> = g.render_styles(&g.params().bind_frozen(), &wv, &mut rng, r)?.iter().map(to_unit).collect();
    let mut tiles = targets.clone();
    tiles.extend(recon);
    save_rgb(&dir.join("comparison.png"), &grid(&tiles, targets.len())?)?;
    println!("final {} loss {:.6e}, best {:.6e}", icfg.loss_kind, result.final_loss, result.best_trace.last().unwrap());
    Ok(())
}

fn read_style(path: &Path) -> Result<StyleVector> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn cmd_interpolate(a: &InterpolateArgs, dir: &Path) -> Result<()> {
    let g = ema_from(&a.checkpoint)?;
    let res = a.resolution.unwrap_or(g.config().train_resolution);
    let mut rng = RngStream::new(a.seed);
    let frames = match (&a.from_w, &a.to_w) {
        (Some(fa), Some(fb)) => interpolate_styles(&g, &read_style(fa)?, &read_style(fb)?, a.steps, &mut rng, res)?,
        _ => {
            let d = g.config().latent_dim;
            let za = LatentCode::sample(d, &mut RngStream::new(a.from_seed));
            let zb = LatentCode::sample(d, &mut RngStream::new(a.to_seed));
            let space = match a.space {
                SpaceArg::Z => LatentSpace::Z,
                SpaceArg::W => LatentSpace::W,
            };
            interpolate_latent(&g, &za, &zb, a.steps, space, &mut rng, res)?
        }
    };
    let unit: Vec<Tensor> = frames.iter().map(to_unit).collect();
    for (i, f) in unit.iter().enumerate() {
        save_rgb(&dir.join(format!("frame{i:04}.png")), f)?;
    }
    save_rgb(&dir.join("strip.png"), &grid(&unit, unit.len())?)
}
