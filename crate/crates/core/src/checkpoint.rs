//! Versioned, checksummed checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "DEWPCKPT" | version u32 | payload_len u64 | header_check [8]
//! payload: meta_len u64 | meta JSON | f64 blocks (params, then m and v)
//! payload sha256 [32]
//! ```
//!
//! `header_check` is the first 8 bytes of the SHA-256 of the preceding 20
//! bytes, so a damaged header is reported as a checksum error rather than a
//! misleading version or length.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{Tape, Tensor, Var};
use crate::data::{NormalizationStats, WindowSample};
use crate::error::{Error, Result};
use crate::eval::{LinearBaseline, LinearConfig};
use crate::model::{DewpModel, Forecaster, ModelConfig, ParamSet};
use crate::train::OptimizerState;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DEWPCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 + 8;
const TRAILER_LEN: usize = 32;

/// Architecture and hyperparameters needed to rebuild a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "config", rename_all = "snake_case")]
pub enum ModelSpec {
    Dewp(ModelConfig),
    Linear(LinearConfig),
}

impl ModelSpec {
    pub fn build(&self, seed: u64) -> Result<Model> {
        Ok(match self {
            ModelSpec::Dewp(c) => Model::Dewp(DewpModel::new(c.clone(), seed)?),
            ModelSpec::Linear(c) => Model::Linear(LinearBaseline::new(c.clone(), seed)?),
        })
    }

    pub fn with_params(&self, params: &ParamSet) -> Result<Model> {
        Ok(match self {
            ModelSpec::Dewp(c) => Model::Dewp(DewpModel::from_params(c.clone(), params)?),
            ModelSpec::Linear(c) => Model::Linear(LinearBaseline::from_params(c.clone(), params)?),
        })
    }
}

/// Any trainable forecaster.
#[derive(Clone, Debug)]
pub enum Model {
    Dewp(DewpModel),
    Linear(LinearBaseline),
}

impl Model {
    pub fn spec(&self) -> ModelSpec {
        match self {
            Model::Dewp(m) => ModelSpec::Dewp(m.config().clone()),
            Model::Linear(m) => ModelSpec::Linear(m.config().clone()),
        }
    }

    fn inner(&self) -> &dyn Forecaster {
        match self {
            Model::Dewp(m) => m,
            Model::Linear(m) => m,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Forecaster {
        match self {
            Model::Dewp(m) => m,
            Model::Linear(m) => m,
        }
    }
}

impl Forecaster for Model {
    fn lookback(&self) -> usize {
        self.inner().lookback()
    }

    fn horizon(&self) -> usize {
        self.inner().horizon()
    }

    fn params(&self) -> &ParamSet {
        self.inner().params()
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        self.inner_mut().params_mut()
    }

    fn forward(&self, tape: &mut Tape, leaves: &[Var], sample: &WindowSample) -> Result<Var> {
        self.inner().forward(tape, leaves, sample)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub tool_version: String,
    pub config_digest: String,
    pub spec: ModelSpec,
    pub params: ParamSet,
    pub optimizer: Option<OptimizerState>,
    /// Normalization the model was trained under.
    pub stats: Option<NormalizationStats>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    tool_version: String,
    config_digest: String,
    spec: ModelSpec,
    tensors: Vec<(String, Vec<usize>)>,
    optimizer_step: Option<u64>,
    stats: Option<NormalizationStats>,
}

fn header_check(prefix: &[u8]) -> [u8; 8] {
    let d = Sha256::digest(prefix);
    let mut out = [0; 8];
    out.copy_from_slice(&d[..8]);
    out
}

fn push_tensor(out: &mut Vec<u8>, t: &Tensor) {
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_tensor(bytes: &[u8], pos: &mut usize, shape: &[usize]) -> Result<Tensor> {
    let n: usize = shape.iter().product();
    let end = *pos + n * 8;
    if end > bytes.len() {
        return Err(Error::Truncated {
            expected: end,
            found: bytes.len(),
        });
    }
    let data = bytes[*pos..end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    *pos = end;
    Tensor::new(shape.to_vec(), data)
}

impl Checkpoint {
    pub fn new(model: &Model, optimizer: Option<OptimizerState>, stats: Option<NormalizationStats>) -> Self {
        Checkpoint {
            tool_version: crate::VERSION.to_string(),
            config_digest: String::new(),
            spec: model.spec(),
            params: model.params().clone(),
            optimizer,
            stats,
        }
    }

    pub fn model(&self) -> Result<Model> {
        self.spec.with_params(&self.params)
    }

    /// Digest of the embedded normalization stats, if any.
    pub fn stats_digest(&self) -> Option<String> {
        self.stats.as_ref().map(|s| s.digest())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if let Some(opt) = &self.optimizer {
            opt.check_matches(&self.params)?;
        }
        let meta = Meta {
            tool_version: self.tool_version.clone(),
            config_digest: self.config_digest.clone(),
            spec: self.spec.clone(),
            tensors: self
                .params
                .iter()
                .map(|p| (p.name.clone(), p.value.shape().to_vec()))
                .collect(),
            optimizer_step: self.optimizer.as_ref().map(|o| o.t),
            stats: self.stats.clone(),
        };
        let meta_json = serde_json::to_vec(&meta)?;
        let mut payload = Vec::with_capacity(meta_json.len() + 8 * 3 * self.params.num_scalars() + 8);
        payload.extend_from_slice(&(meta_json.len() as u64).to_le_bytes());
        payload.extend_from_slice(&meta_json);
        for p in self.params.iter() {
            push_tensor(&mut payload, &p.value);
        }
        if let Some(opt) = &self.optimizer {
            opt.m.iter().chain(&opt.v).for_each(|t| push_tensor(&mut payload, t));
        }

        let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + TRAILER_LEN);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        let check = header_check(&out);
        out.extend_from_slice(&check);
        out.extend_from_slice(&payload);
        out.extend_from_slice(&Sha256::digest(&payload));
        Ok(out)
    }

    /// Validates the whole file before decoding anything.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        if header_check(&bytes[..20])[..] != bytes[20..28] {
            return Err(Error::Checksum("checkpoint header".into()));
        }
        if &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::format("<checkpoint>", "not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let payload_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let total = HEADER_LEN + payload_len + TRAILER_LEN;
        if bytes.len() < total {
            return Err(Error::Truncated {
                expected: total,
                found: bytes.len(),
            });
        }
        if bytes.len() > total {
            return Err(Error::format(
                "<checkpoint>",
                format!("{} trailing bytes after checksum", bytes.len() - total),
            ));
        }
        let payload = &bytes[HEADER_LEN..HEADER_LEN + payload_len];
        if Sha256::digest(payload)[..] != bytes[HEADER_LEN + payload_len..] {
            return Err(Error::Checksum("checkpoint payload".into()));
        }

        let corrupt = |m: &str| Error::format("<checkpoint>", m.to_string());
        if payload.len() < 8 {
            return Err(corrupt("payload too short"));
        }
        let meta_len = u64::from_le_bytes(payload[..8].try_into().expect("8 bytes")) as usize;
        let meta_end = 8usize
            .checked_add(meta_len)
            .filter(|&e| e <= payload.len())
            .ok_or_else(|| corrupt("metadata length exceeds payload"))?;
        let meta: Meta = serde_json::from_slice(&payload[8..meta_end])?;
        let mut pos = meta_end;
        let mut params = ParamSet::new();
        for (name, shape) in &meta.tensors {
            params.push(name.clone(), read_tensor(payload, &mut pos, shape)?);
        }
        let optimizer = match meta.optimizer_step {
            None => None,
            Some(t) => {
                let mut read_all = || -> Result<Vec<Tensor>> {
                    meta.tensors.iter().map(|(_, s)| read_tensor(payload, &mut pos, s)).collect()
                };
                let m = read_all()?;
                let v = read_all()?;
                Some(OptimizerState { t, m, v })
            }
        };
        if pos != payload.len() {
            return Err(corrupt("payload has unread bytes"));
        }
        Ok(Checkpoint {
            tool_version: meta.tool_version,
            config_digest: meta.config_digest,
            spec: meta.spec,
            params,
            optimizer,
            stats: meta.stats,
        })
    }

    /// Writes through a temporary file and returns the file's SHA-256.
    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        Ok(crate::digest::sha256_hex(&bytes))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format { message, .. } => Error::format(path, message),
            Error::Checksum(what) => Error::Checksum(format!("{what} of {}", path.display())),
            other => other,
        })
    }

    /// Loads and rejects checkpoints whose model spec differs from `expected`.
    pub fn load_expecting(path: &Path, expected: &ModelSpec) -> Result<Self> {
        let ckpt = Self::load(path)?;
        if &ckpt.spec != expected {
            return Err(Error::ConfigMismatch(format!(
                "checkpoint holds {}, expected {}",
                serde_json::to_string(&ckpt.spec)?,
                serde_json::to_string(expected)?
            )));
        }
        Ok(ckpt)
    }
}
