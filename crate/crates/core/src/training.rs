//! Adversarial training: grouped multi-crop critic batches, alternating
//! critic/generator updates, generator EMA.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use autodiff::Var;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{save_checkpoint, Checkpoint};
use crate::corpus::{sample_crops, Corpus, CropBatch};
use crate::critic::{gradient_penalty, scores, Critic, CriticConfig, CriticModel};
use crate::error::{Error, Result};
use crate::generator::{sample_noise_batch, Generator, GeneratorConfig};
use crate::image_io::{grid, save_rgb, to_unit};
use crate::params::{Adam, AdamConfig, ParamSet};
use crate::rng::{RngState, RngStream};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Wasserstein,
    /// Logistic loss; kept to reproduce inter-texture mode collapse.
    NonSaturating,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
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
    /// Fakes sharing one latent code in a generator batch; 1 disables sharing.
    pub noise_per_latent: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            textures_per_batch: 8,
            crops_per_texture: 2,
            d_steps_per_g_step: 2,
            total_g_iterations: 20_000,
            learning_rate: 0.002,
            gp_coefficient: 0.01,
            ema_decay: 0.999,
            beta1: 0.0,
            beta2: 0.99,
            loss: LossKind::Wasserstein,
            noise_per_latent: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("textures_per_batch", self.textures_per_batch as u64),
            ("crops_per_texture", self.crops_per_texture as u64),
            ("d_steps_per_g_step", self.d_steps_per_g_step as u64),
            ("total_g_iterations", self.total_g_iterations),
            ("noise_per_latent", self.noise_per_latent as u64),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v < 1) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if !(self.ema_decay > 0.0 && self.ema_decay < 1.0) {
            return Err(Error::Config(format!("ema_decay {} must lie in (0, 1)", self.ema_decay)));
        }
        if !(self.learning_rate > 0.0) || !(self.gp_coefficient >= 0.0) {
            return Err(Error::Config("learning_rate must be positive and gp_coefficient non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn batch_size(&self) -> usize {
        self.textures_per_batch * self.crops_per_texture
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, epsilon: 1e-8 }
    }
}

/// Shadow copy of the generator parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct EmaState {
    pub shadow: ParamSet,
    pub decay: f64,
}

impl EmaState {
    pub fn new(params: &ParamSet, decay: f64) -> Self {
        EmaState { shadow: params.clone(), decay }
    }

    pub fn generator(&self, config: &GeneratorConfig) -> Result<Generator> {
        Generator::from_params(config.clone(), self.shadow.clone())
    }
}

/// `shadow := decay · shadow + (1 − decay) · current`.
pub fn ema_update(ema: &mut EmaState, current: &ParamSet) -> Result<()> {
    ema.shadow.check_structure(current, "EMA shadow")?;
    let d = ema.decay as f32;
    for (s, (_, c)) in ema.shadow.tensors_mut().zip(current.iter()) {
        for (sv, &cv) in s.data.iter_mut().zip(&c.data) {
            *sv = d * *sv + (1.0 - d) * cv;
        }
    }
    Ok(())
}

fn softplus(x: &Var<f32>) -> Var<f32> {
    // max(x, 0) + ln(1 + e^{-|x|})
    let relu = x.leaky_relu(0.0);
    &relu + &x.abs().neg().exp().add_scalar(1.0).ln()
}

/// Loss values of one critic update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticLoss {
    /// Adversarial part without the penalty.
    pub adversarial: f64,
    pub gp: f64,
    pub total: f64,
}

/// Fakes `[n, 3, R, R]` at training resolution from fresh `(z, n, Δ)`;
/// `per_latent` consecutive fakes share a latent code.
pub fn sample_fakes(gen: &Generator, p: &crate::params::Bound, n: usize, per_latent: usize, rng: &mut RngStream) -> Result<Var<f32>> {
    let cfg = gen.config();
    let d = cfg.latent_dim;
    let distinct = n.div_ceil(per_latent.max(1));
    let codes = rng.normal_vec(distinct * d);
    let z: Vec<f32> = (0..n).flat_map(|i| codes[(i / per_latent.max(1)) * d..][..d].iter().copied()).collect();
    let w = gen.map_batch(p, &Var::constant(z, &[n, d]));
    let res = cfg.train_resolution;
    let noise = sample_noise_batch(cfg, rng, res, n)?;
    let phases: Vec<_> = (0..n).map(|_| gen.sample_phases(rng)).collect();
    gen.synthesize(p, &w, &noise, &phases, res)
}

/// Critic objective on a grouped real batch and a fake batch. Real scores
/// are averaged within each texture, then across textures.
pub fn critic_objective<C: CriticModel + ?Sized>(
    critic: &C,
    p: &crate::params::Bound,
    real: &CropBatch,
    fake: &Var<f32>,
    config: &TrainConfig,
    rng: &mut RngStream,
) -> Result<(Var<f32>, Var<f32>)> {
    real.validate()?;
    if fake.shape() != &real.data.shape[..] {
        return Err(Error::InvalidBatch(format!("fake batch {:?} vs real {:?}", fake.shape(), real.data.shape)));
    }
    let x = real.data.to_var();
    let (t, k) = (real.textures.len(), real.crops_per_texture);
    let real_s = scores(critic, p, &x, rng)?.reshape(&[t, k]);
    let fake_s = scores(critic, p, fake, rng)?;
    let adv = match config.loss {
        LossKind::Wasserstein => fake_s.mean_all() - real_s.mean_axes(&[1]).mean_all(),
        LossKind::NonSaturating => softplus(&fake_s).mean_all() + softplus(&real_s.neg()).mean_axes(&[1]).mean_all(),
    };
    let gp = gradient_penalty(critic, p, &x, fake, rng)?;
    Ok((adv, gp))
}

/// One critic update; the generator is only read.
pub fn critic_step<C: CriticModel + ?Sized>(
    gen: &Generator,
    critic: &mut C,
    opt: &mut Adam,
    batch: &CropBatch,
    config: &TrainConfig,
    rng: &mut RngStream,
) -> Result<CriticLoss> {
    batch.validate()?;
    let fake = sample_fakes(gen, &gen.params().bind_frozen(), batch.len(), config.noise_per_latent, rng)?;
    let p = critic.params().bind();
    let (adv, gp) = critic_objective(critic, &p, batch, &fake, config, rng)?;
    let total = &adv + &gp.scale(config.gp_coefficient);
    let loss = CriticLoss { adversarial: adv.item() as f64, gp: gp.item() as f64, total: total.item() as f64 };
    if !loss.total.is_finite() {
        return Err(Error::Numerical(format!("critic loss {}", loss.total)));
    }
    let grads = autodiff::grad(&total, &p.refs(), false);
    opt.step(critic.params_mut(), &grads)?;
    Ok(loss)
}

/// One generator update against a frozen critic, followed by the EMA update.
pub fn generator_step<C: CriticModel + ?Sized>(
    gen: &mut Generator,
    ema: &mut EmaState,
    critic: &C,
    opt: &mut Adam,
    config: &TrainConfig,
    rng: &mut RngStream,
) -> Result<f64> {
    let p = gen.params().bind();
    let fake = sample_fakes(gen, &p, config.batch_size(), config.noise_per_latent, rng)?;
    let s = scores(critic, &critic.params().bind_frozen(), &fake, rng)?;
    let loss = match config.loss {
        LossKind::Wasserstein => s.mean_all().neg(),
        LossKind::NonSaturating => softplus(&s.neg()).mean_all(),
    };
    let value = loss.item() as f64;
    if !value.is_finite() {
        return Err(Error::Numerical(format!("generator loss {value}")));
    }
    let grads = autodiff::grad(&loss, &p.refs(), false);
    opt.step(gen.params_mut(), &grads)?;
    ema_update(ema, gen.params())?;
    Ok(value)
}

/// One row of the loss log; `d_loss` and `gp` are means over the critic
/// steps of the iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: u64,
    pub d_loss: f64,
    pub g_loss: f64,
    pub gp: f64,
}

/// Everything that evolves during training.
#[derive(Clone, Debug)]
pub struct TrainingState {
    pub train: TrainConfig,
    pub generator: Generator,
    pub ema: EmaState,
    pub critic: Critic,
    pub g_opt: Adam,
    pub d_opt: Adam,
    pub iteration: u64,
    pub data_rng: RngStream,
    pub g_rng: RngStream,
    pub d_rng: RngStream,
}

impl TrainingState {
    pub fn new(gen_config: GeneratorConfig, critic_config: CriticConfig, train: TrainConfig) -> Result<Self> {
        train.validate()?;
        gen_config.validate()?;
        critic_config.validate()?;
        if gen_config.train_resolution != critic_config.input_resolution {
            return Err(Error::Config(format!(
                "generator trains at {} but the critic reads {}",
                gen_config.train_resolution, critic_config.input_resolution
            )));
        }
        let mut root = RngStream::new(train.seed);
        let generator = Generator::new(gen_config, &mut root.fork(1))?;
        let critic = Critic::new(critic_config, &mut root.fork(2))?;
        let ema = EmaState::new(generator.params(), train.ema_decay);
        let g_opt = Adam::new(train.adam(), generator.params());
        let d_opt = Adam::new(train.adam(), critic.params());
        Ok(TrainingState {
            data_rng: root.fork(3),
            g_rng: root.fork(4),
            d_rng: root.fork(5),
            train,
            generator,
            ema,
            critic,
            g_opt,
            d_opt,
            iteration: 0,
        })
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Self {
        let rng = |name: &str| ck.rng.iter().find(|(n, _)| n == name).map(|(_, s)| RngStream::from_state(s));
        TrainingState {
            data_rng: rng("data").unwrap_or_else(|| RngStream::new(ck.train.seed)),
            g_rng: rng("generator").unwrap_or_else(|| RngStream::new(ck.train.seed + 1)),
            d_rng: rng("critic").unwrap_or_else(|| RngStream::new(ck.train.seed + 2)),
            train: ck.train,
            generator: ck.generator,
            ema: ck.ema,
            critic: ck.critic,
            g_opt: ck.g_opt,
            d_opt: ck.d_opt,
            iteration: ck.iteration,
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            train: self.train.clone(),
            generator: self.generator.clone(),
            ema: self.ema.clone(),
            critic: self.critic.clone(),
            g_opt: self.g_opt.clone(),
            d_opt: self.d_opt.clone(),
            iteration: self.iteration,
            rng: self.rng_states(),
        }
    }

    fn rng_states(&self) -> Vec<(String, RngState)> {
        vec![
            ("data".into(), self.data_rng.state()),
            ("generator".into(), self.g_rng.state()),
            ("critic".into(), self.d_rng.state()),
        ]
    }

    pub fn ema_generator(&self) -> Result<Generator> {
        self.ema.generator(self.generator.config())
    }

    /// Checks that `corpus` can feed the configured batches.
    pub fn check_corpus(&self, corpus: &Corpus) -> Result<()> {
        if corpus.is_empty() {
            return Err(Error::Config("corpus is empty".into()));
        }
        if corpus.len() < self.train.textures_per_batch {
            return Err(Error::Config(format!(
                "batch needs {} distinct textures, corpus has {}",
                self.train.textures_per_batch,
                corpus.len()
            )));
        }
        let r = self.generator.config().train_resolution;
        if corpus.crop_size != r {
            return Err(Error::Config(format!("corpus crops are {}px, training resolution is {r}", corpus.crop_size)));
        }
        Ok(())
    }

    /// `d_steps_per_g_step` critic updates, then one generator update.
    pub fn step(&mut self, corpus: &Corpus) -> Result<LossRecord> {
        let t = &self.train;
        let (mut d_sum, mut gp_sum) = (0.0, 0.0);
        for _ in 0..t.d_steps_per_g_step {
            let batch = sample_crops(corpus, t.textures_per_batch, t.crops_per_texture, &mut self.data_rng)?;
            let l = critic_step(&self.generator, &mut self.critic, &mut self.d_opt, &batch, t, &mut self.d_rng)?;
            d_sum += l.total;
            gp_sum += l.gp;
        }
        let g_loss = generator_step(&mut self.generator, &mut self.ema, &self.critic, &mut self.g_opt, t, &mut self.g_rng)?;
        self.iteration += 1;
        let k = t.d_steps_per_g_step as f64;
        Ok(LossRecord { iteration: self.iteration, d_loss: d_sum / k, g_loss, gp: gp_sum / k })
    }
}

/// Hooks invoked by [`train_loop`]; returning an error stops training.
pub trait Callbacks {
    fn on_iteration(&mut self, _record: &LossRecord, _state: &TrainingState) -> Result<()> {
        Ok(())
    }

    fn on_finish(&mut self, _state: &TrainingState) -> Result<()> {
        Ok(())
    }
}

/// No-op callbacks.
pub struct Silent;

impl Callbacks for Silent {}

/// Collects the loss trace in memory.
#[derive(Default)]
pub struct Recorder {
    pub records: Vec<LossRecord>,
}

impl Callbacks for Recorder {
    fn on_iteration(&mut self, record: &LossRecord, _: &TrainingState) -> Result<()> {
        self.records.push(*record);
        Ok(())
    }
}

/// Runs `state` until `total_g_iterations`, then returns its checkpoint.
pub fn run(state: &mut TrainingState, corpus: &Corpus, callbacks: &mut dyn Callbacks) -> Result<Checkpoint> {
    state.check_corpus(corpus)?;
    while state.iteration < state.train.total_g_iterations {
        let rec = state.step(corpus)?;
        callbacks.on_iteration(&rec, state)?;
    }
    callbacks.on_finish(state)?;
    Ok(state.checkpoint())
}

/// Fresh training from `seed`; reproducible given configs and corpus.
pub fn train_loop(
    gen_config: GeneratorConfig,
    critic_config: CriticConfig,
    train: TrainConfig,
    corpus: &Corpus,
    callbacks: &mut dyn Callbacks,
) -> Result<Checkpoint> {
    let mut state = TrainingState::new(gen_config, critic_config, train)?;
    run(&mut state, corpus, callbacks)
}

/// Writes the run directory: `losses.csv`, periodic checkpoints and sample
/// grids from the EMA generator.
pub struct RunWriter {
    dir: PathBuf,
    log: BufWriter<File>,
    pub checkpoint_every: u64,
    pub sample_every: u64,
    pub sample_count: usize,
    pub log_every: u64,
    sample_rng: RngStream,
}

pub const LOSS_LOG: &str = "losses.csv";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

impl RunWriter {
    pub fn create(dir: &Path, checkpoint_every: u64, sample_every: u64, seed: u64) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut log = BufWriter::new(File::create(dir.join(LOSS_LOG))?);
        writeln!(log, "iteration,d_loss,g_loss,gp")?;
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            log,
            checkpoint_every,
            sample_every,
            sample_count: 16,
            log_every: 100,
            sample_rng: RngStream::new(seed ^ 0x5A5A),
        })
    }

    fn write_samples(&mut self, state: &TrainingState, name: &str) -> Result<()> {
        let g = state.ema_generator()?;
        let mut rng = self.sample_rng.clone();
        let imgs = g.sample_images(&mut rng, self.sample_count, g.config().train_resolution)?;
        let unit: Vec<_> = imgs.iter().map(to_unit).collect();
        let cols = (self.sample_count as f64).sqrt().ceil() as usize;
        save_rgb(&self.dir.join(name), &grid(&unit, cols)?)
    }
}

impl Callbacks for RunWriter {
    fn on_iteration(&mut self, r: &LossRecord, state: &TrainingState) -> Result<()> {
        writeln!(self.log, "{},{},{},{}", r.iteration, r.d_loss, r.g_loss, r.gp)?;
        if self.log_every > 0 && r.iteration % self.log_every == 0 {
            log::info!("iter {:>6}  d {:+.4}  g {:+.4}  gp {:.4}", r.iteration, r.d_loss, r.g_loss, r.gp);
            self.log.flush()?;
        }
        if self.checkpoint_every > 0 && r.iteration % self.checkpoint_every == 0 {
            save_checkpoint(&self.dir.join(format!("iter{:07}.ckpt", r.iteration)), &state.checkpoint())?;
        }
        if self.sample_every > 0 && r.iteration % self.sample_every == 0 {
            self.write_samples(state, &format!("samples{:07}.png", r.iteration))?;
        }
        Ok(())
    }

    fn on_finish(&mut self, state: &TrainingState) -> Result<()> {
        self.log.flush()?;
        save_checkpoint(&self.dir.join(FINAL_CHECKPOINT), &state.checkpoint())?;
        self.write_samples(state, "samples_final.png")
    }
}
