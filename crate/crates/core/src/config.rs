//! Flat key-value run configuration (TOML), with `key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::critic::CriticConfig;
use crate::error::{Error, Result};
use crate::features::RandomVgg;
use crate::generator::{GeneratorConfig, TbMode};
use crate::inversion::{InversionConfig, InversionLoss};
use crate::metrics::{default_thresholds, TippProtocol};
use crate::texton::PhaseMode;
use crate::training::{LossKind, TrainConfig};

pub const SNAPSHOT_FILE: &str = "config.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub corpus_dir: PathBuf,
    pub corpus_textures: usize,
    pub corpus_image_size: usize,

    pub latent_dim: usize,
    pub base_resolution: usize,
    pub train_resolution: usize,
    pub tb_cutoff_resolution: usize,
    pub channels: Vec<usize>,
    pub textons_per_module: usize,
    pub tb_mode: TbMode,
    pub fixed_phase: bool,
    pub phase_mode: PhaseMode,
    pub tb_condition_on_latent: bool,
    pub mapping_layers: usize,

    /// Critic widths, lowest resolution first; empty means `channels`.
    pub critic_channels: Vec<usize>,
    pub critic_input_noise: f64,
    pub mbstd_group: usize,

    pub textures_per_batch: usize,
    pub crops_per_texture: usize,
    pub d_steps_per_g_step: usize,
    pub total_g_iterations: u64,
    pub learning_rate: f64,
    pub gp_coefficient: f64,
    pub ema_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub loss: LossKind,
    pub noise_per_latent: usize,
    pub checkpoint_every: u64,
    pub sample_every: u64,

    pub tipp_latent_codes: usize,
    pub tipp_samples_per_code: usize,
    pub tipp_repeats: usize,
    pub tipp_thresholds: Vec<f64>,
    pub fid_samples: usize,

    pub inversion_loss: InversionLoss,
    pub inversion_layers: Vec<String>,
    pub inversion_content_layer: String,
    pub inversion_learning_rate: f64,
    pub inversion_iterations: usize,
    pub inversion_crops_per_eval: usize,
    pub inversion_init_samples: usize,

    pub extractor_widths: [usize; 4],
    pub extractor_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let g = GeneratorConfig::default();
        let c = CriticConfig::default();
        let t = TrainConfig::default();
        let tipp = TippProtocol::default();
        let inv = InversionConfig::default();
        RunConfig {
            seed: t.seed,
            corpus_dir: PathBuf::from("corpus"),
            corpus_textures: 16,
            corpus_image_size: 3 * g.train_resolution,
            latent_dim: g.latent_dim,
            base_resolution: g.base_resolution,
            train_resolution: g.train_resolution,
            tb_cutoff_resolution: g.tb_cutoff_resolution,
            channels: g.channels,
            textons_per_module: g.textons_per_module,
            tb_mode: g.tb_mode,
            fixed_phase: g.fixed_phase,
            phase_mode: g.phase_mode,
            tb_condition_on_latent: g.tb_condition_on_latent,
            mapping_layers: g.mapping_layers,
            critic_channels: Vec::new(),
            critic_input_noise: c.input_noise_sigma,
            mbstd_group: c.mbstd_group,
            textures_per_batch: t.textures_per_batch,
            crops_per_texture: t.crops_per_texture,
            d_steps_per_g_step: t.d_steps_per_g_step,
            total_g_iterations: t.total_g_iterations,
            learning_rate: t.learning_rate,
            gp_coefficient: t.gp_coefficient,
            ema_decay: t.ema_decay,
            beta1: t.beta1,
            beta2: t.beta2,
            loss: t.loss,
            noise_per_latent: t.noise_per_latent,
            checkpoint_every: 1000,
            sample_every: 1000,
            tipp_latent_codes: tipp.latent_codes,
            tipp_samples_per_code: tipp.samples_per_code,
            tipp_repeats: tipp.repeats,
            tipp_thresholds: default_thresholds(),
            fid_samples: 1000,
            inversion_loss: inv.loss_kind,
            inversion_layers: inv.layer_set,
            inversion_content_layer: inv.content_layer,
            inversion_learning_rate: inv.learning_rate,
            inversion_iterations: inv.iterations,
            inversion_crops_per_eval: inv.crops_per_eval,
            inversion_init_samples: inv.init_samples,
            extractor_widths: RandomVgg::DEFAULT_WIDTHS,
            extractor_seed: RandomVgg::DEFAULT_SEED,
        }
    }
}

impl RunConfig {
    /// A 32 px model small enough to train on one CPU core in minutes.
    /// A single-texture corpus draws all crops from that texture.
    pub fn desk(textures: usize, iterations: u64) -> Self {
        RunConfig {
            seed: 1,
            corpus_textures: textures,
            corpus_image_size: 96,
            latent_dim: 64,
            train_resolution: 32,
            tb_cutoff_resolution: 16,
            channels: vec![32, 32, 16, 8],
            textures_per_batch: textures.min(8),
            crops_per_texture: if textures == 1 { 8 } else { 2 },
            total_g_iterations: iterations,
            ..RunConfig::default()
        }
    }

    /// Parses TOML text, applies `key=value` overrides (values in TOML
    /// syntax, bare words read as strings), then validates.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            let key = key.trim();
            let value = value.trim();
            let parsed = format!("v = {value}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(value.to_string()));
            table.insert(key.to_string(), parsed);
        }
        let cfg: RunConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        RunConfig::parse(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Writes the snapshot that replays this run.
    pub fn write_snapshot(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(SNAPSHOT_FILE);
        std::fs::write(&path, self.to_toml())?;
        Ok(path)
    }

    pub fn validate(&self) -> Result<()> {
        self.generator_config().validate()?;
        self.critic_config().validate()?;
        self.train_config().validate()?;
        self.inversion_config().validate()?;
        if self.tipp_thresholds.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::Config("tipp_thresholds must be non-negative".into()));
        }
        if self.corpus_image_size < self.train_resolution {
            return Err(Error::Config(format!(
                "corpus_image_size {} is smaller than train_resolution {}",
                self.corpus_image_size, self.train_resolution
            )));
        }
        if self.corpus_textures < self.textures_per_batch {
            return Err(Error::Config(format!(
                "textures_per_batch {} exceeds corpus_textures {}",
                self.textures_per_batch, self.corpus_textures
            )));
        }
        Ok(())
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig {
            latent_dim: self.latent_dim,
            base_resolution: self.base_resolution,
            train_resolution: self.train_resolution,
            tb_cutoff_resolution: self.tb_cutoff_resolution,
            channels: self.channels.clone(),
            textons_per_module: self.textons_per_module,
            tb_mode: self.tb_mode,
            fixed_phase: self.fixed_phase,
            phase_mode: self.phase_mode,
            tb_condition_on_latent: self.tb_condition_on_latent,
            mapping_layers: self.mapping_layers,
        }
    }

    pub fn critic_config(&self) -> CriticConfig {
        CriticConfig {
            input_resolution: self.train_resolution,
            base_resolution: self.base_resolution,
            channels: if self.critic_channels.is_empty() { self.channels.clone() } else { self.critic_channels.clone() },
            input_noise_sigma: self.critic_input_noise,
            mbstd_group: self.mbstd_group,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            textures_per_batch: self.textures_per_batch,
            crops_per_texture: self.crops_per_texture,
            d_steps_per_g_step: self.d_steps_per_g_step,
            total_g_iterations: self.total_g_iterations,
            learning_rate: self.learning_rate,
            gp_coefficient: self.gp_coefficient,
            ema_decay: self.ema_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            loss: self.loss,
            noise_per_latent: self.noise_per_latent,
            seed: self.seed,
        }
    }

    pub fn tipp_protocol(&self) -> TippProtocol {
        TippProtocol {
            latent_codes: self.tipp_latent_codes,
            samples_per_code: self.tipp_samples_per_code,
            repeats: self.tipp_repeats,
            thresholds: self.tipp_thresholds.clone(),
        }
    }

    pub fn inversion_config(&self) -> InversionConfig {
        InversionConfig {
            loss_kind: self.inversion_loss,
            layer_set: self.inversion_layers.clone(),
            content_layer: self.inversion_content_layer.clone(),
            learning_rate: self.inversion_learning_rate,
            iterations: self.inversion_iterations,
            crops_per_eval: self.inversion_crops_per_eval,
            init_samples: self.inversion_init_samples,
        }
    }

    pub fn extractor(&self) -> RandomVgg {
        RandomVgg::new(self.extractor_widths, self.extractor_seed)
    }
}
