//! Versioned binary checkpoints.
//!
//! Layout: magic, format version, section count, then per section a name,
//! payload length, payload and SHA-256 of the payload. All integers are
//! little-endian. Writing is deterministic, so save → load → save is
//! byte-identical.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::critic::{Critic, CriticConfig, CriticModel};
use crate::error::{Error, Result};
use crate::generator::{Generator, GeneratorConfig};
use crate::params::{Adam, AdamConfig, AdamState, ParamSet, Tensor};
use crate::rng::RngState;
use crate::training::{EmaState, TrainConfig};

pub const MAGIC: &[u8; 8] = b"TXGNCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub train: TrainConfig,
    pub generator: Generator,
    pub ema: EmaState,
    pub critic: Critic,
    pub g_opt: Adam,
    pub d_opt: Adam,
    pub iteration: u64,
    pub rng: Vec<(String, RngState)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigSnapshot {
    generator: GeneratorConfig,
    critic: CriticConfig,
    train: TrainConfig,
    ema_decay: f64,
    g_adam: AdamConfig,
    d_adam: AdamConfig,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Progress {
    iteration: u64,
    g_adam_step: u64,
    d_adam_step: u64,
    rng: Vec<(String, RngState)>,
}

impl Checkpoint {
    pub fn generator_config(&self) -> &GeneratorConfig {
        self.generator.config()
    }

    pub fn critic_config(&self) -> &CriticConfig {
        self.critic.config()
    }

    /// The EMA generator, used for sampling and evaluation.
    pub fn ema_generator(&self) -> Result<Generator> {
        self.ema.generator(self.generator.config())
    }

    /// Refuses to resume under configs that build different parameter layouts.
    pub fn check_compatible(&self, generator: &GeneratorConfig, critic: &CriticConfig) -> Result<()> {
        Generator::from_params(generator.clone(), self.generator.params().clone())?;
        Critic::from_params(critic.clone(), self.critic.params().clone())?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let snapshot = ConfigSnapshot {
            generator: self.generator.config().clone(),
            critic: self.critic.config().clone(),
            train: self.train.clone(),
            ema_decay: self.ema.decay,
            g_adam: self.g_opt.config,
            d_adam: self.d_opt.config,
        };
        let progress = Progress {
            iteration: self.iteration,
            g_adam_step: self.g_opt.state.step,
            d_adam_step: self.d_opt.state.step,
            rng: self.rng.clone(),
        };
        let sections: Vec<(&str, Vec<u8>)> = vec![
            ("config", serde_json::to_vec_pretty(&snapshot)?),
            ("generator", encode_params(self.generator.params())),
            ("ema", encode_params(&self.ema.shadow)),
            ("critic", encode_params(self.critic.params())),
            ("g_adam_m", encode_params(&self.g_opt.state.m)),
            ("g_adam_v", encode_params(&self.g_opt.state.v)),
            ("d_adam_m", encode_params(&self.d_opt.state.m)),
            ("d_adam_v", encode_params(&self.d_opt.state.v)),
            ("progress", serde_json::to_vec_pretty(&progress)?),
        ];
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(sections.len() as u32).to_le_bytes());
        for (name, payload) in sections {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            out.extend_from_slice(&Sha256::digest(&payload));
            out.extend_from_slice(&payload);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0, section: "header".into() };
        if r.take(8)? != MAGIC {
            return Err(r.fail("not a checkpoint file"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.fail(&format!("format version {version}, expected {VERSION}")));
        }
        let count = r.u32()?;
        let mut sections = Vec::new();
        for _ in 0..count {
            r.section = "header".into();
            let len = r.u16()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| r.fail("section name is not UTF-8"))?;
            r.section = name.clone();
            let len = r.u64()? as usize;
            let hash = r.take(32)?.to_vec();
            let payload = r.take(len)?;
            if Sha256::digest(payload).as_slice() != hash.as_slice() {
                return Err(r.fail("checksum mismatch"));
            }
            sections.push((name, payload));
        }
        if r.pos != bytes.len() {
            return Err(Error::Integrity { section: "trailer".into(), detail: "unexpected bytes after last section".into() });
        }
        let get = |name: &str| -> Result<&[u8]> {
            sections
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, p)| *p)
                .ok_or_else(|| Error::Integrity { section: name.into(), detail: "section missing".into() })
        };
        let json_err = |section: &str, e: serde_json::Error| Error::Integrity { section: section.into(), detail: e.to_string() };
        let snap: ConfigSnapshot = serde_json::from_slice(get("config")?).map_err(|e| json_err("config", e))?;
        let progress: Progress = serde_json::from_slice(get("progress")?).map_err(|e| json_err("progress", e))?;
        let params = |name: &str| decode_params(get(name)?, name);

        let generator = Generator::from_params(snap.generator.clone(), params("generator")?)?;
        let critic = Critic::from_params(snap.critic, params("critic")?)?;
        let shadow = params("ema")?;
        generator.params().check_structure(&shadow, "EMA shadow")?;
        let adam = |cfg: AdamConfig, step: u64, m: &str, v: &str, target: &ParamSet| -> Result<Adam> {
            let (m, v) = (params(m)?, params(v)?);
            target.check_structure(&m, "optimizer moments")?;
            target.check_structure(&v, "optimizer moments")?;
            Ok(Adam { config: cfg, state: AdamState { step, m, v } })
        };
        let g_opt = adam(snap.g_adam, progress.g_adam_step, "g_adam_m", "g_adam_v", generator.params())?;
        let d_opt = adam(snap.d_adam, progress.d_adam_step, "d_adam_m", "d_adam_v", critic.params())?;
        Ok(Checkpoint {
            train: snap.train,
            ema: EmaState { shadow, decay: snap.ema_decay },
            generator,
            critic,
            g_opt,
            d_opt,
            iteration: progress.iteration,
            rng: progress.rng,
        })
    }
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, ck.to_bytes()?)?;
    std::fs::rename(tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}

fn encode_params(p: &ParamSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(p.len() as u32).to_le_bytes());
    for (name, t) in p.iter() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn decode_params(bytes: &[u8], section: &str) -> Result<ParamSet> {
    let mut r = Reader { buf: bytes, pos: 0, section: section.into() };
    let mut ps = ParamSet::new();
    for _ in 0..r.u32()? {
        let len = r.u16()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| r.fail("tensor name is not UTF-8"))?;
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or_else(|| r.fail("tensor too large"))?)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        ps.add(name, Tensor::new(&shape, data));
    }
    if r.pos != bytes.len() {
        return Err(r.fail("trailing bytes"));
    }
    Ok(ps)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    section: String,
}

impl<'a> Reader<'a> {
    fn fail(&self, detail: &str) -> Error {
        Error::Integrity { section: self.section.clone(), detail: format!("{detail} (offset {})", self.pos) }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.fail("truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
