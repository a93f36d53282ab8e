//! Binary checkpoints holding weights, optimizer moments and the RNG state.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, a JSON
//! header, then the raw little-endian tensor data in header order. The header
//! carries a SHA-256 of the data section so truncation is caught on load.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{EncoderConfig, RunConfig};
use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::training::{AdamState, TrainState, Trainer};

const MAGIC: &[u8; 8] = b"LAYOUTCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    config: RunConfig,
    dtype: String,
    state: TrainState,
    generator_opt_step: u64,
    discriminator_opt_step: u64,
    tensors: Vec<TensorEntry>,
    data_sha256: String,
}

/// An in-memory checkpoint.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub state: TrainState,
    pub tensors: BTreeMap<String, Tensor>,
}

fn dtype_name(d: DType) -> Result<&'static str> {
    match d {
        DType::F32 => Ok("f32"),
        DType::F64 => Ok("f64"),
        other => Err(Error::config(format!("unsupported checkpoint dtype {other:?}"))),
    }
}

fn collect_params(out: &mut BTreeMap<String, Tensor>, prefix: &str, store: &ParamStore) {
    for (name, var) in store.vars() {
        out.insert(format!("{prefix}/{name}"), var.as_tensor().clone());
    }
}

fn collect_moments(out: &mut BTreeMap<String, Tensor>, prefix: &str, opt: &AdamState) {
    for (name, (m, v)) in &opt.moments {
        out.insert(format!("{prefix}/m/{name}"), m.clone());
        out.insert(format!("{prefix}/v/{name}"), v.clone());
    }
}

fn restore_params(tensors: &BTreeMap<String, Tensor>, prefix: &str, store: &ParamStore) -> Result<()> {
    let expected = store.vars().len();
    let found = tensors.keys().filter(|k| k.starts_with(&format!("{prefix}/"))).count();
    if found != expected {
        return Err(Error::shape(format!(
            "checkpoint has {found} {prefix} parameters, the model has {expected}"
        )));
    }
    for (name, var) in store.vars() {
        let key = format!("{prefix}/{name}");
        let t = tensors
            .get(&key)
            .ok_or_else(|| Error::shape(format!("checkpoint is missing {key}")))?;
        if t.dims() != var.dims() {
            return Err(Error::shape(format!(
                "{key}: checkpoint shape {:?}, model shape {:?}",
                t.dims(),
                var.dims()
            )));
        }
        var.set(&t.to_dtype(var.dtype())?)?;
    }
    Ok(())
}

fn restore_moments(tensors: &BTreeMap<String, Tensor>, prefix: &str, step: u64) -> Result<AdamState> {
    let mut moments = BTreeMap::new();
    let m_prefix = format!("{prefix}/m/");
    for (key, m) in tensors.range(m_prefix.clone()..) {
        let Some(name) = key.strip_prefix(&m_prefix) else { break };
        let v = tensors
            .get(&format!("{prefix}/v/{name}"))
            .ok_or_else(|| Error::shape(format!("checkpoint has {key} without its second moment")))?;
        moments.insert(name.to_string(), (m.clone(), v.clone()));
    }
    Ok(AdamState { step, moments })
}

impl Checkpoint {
    pub fn from_trainer(trainer: &mut Trainer, encoders: &EncoderConfig) -> Result<Self> {
        trainer.sync_state_from_optimizers();
        let config = RunConfig {
            train: trainer.config,
            network: trainer.nets.net_config,
            embedder: trainer.nets.emb_config,
            weights: trainer.weights,
            encoders: encoders.clone(),
        };
        let mut tensors = BTreeMap::new();
        collect_params(&mut tensors, "g", &trainer.params.generator);
        collect_params(&mut tensors, "d", &trainer.params.discriminator);
        collect_moments(&mut tensors, "opt_g", &trainer.state.generator_opt);
        collect_moments(&mut tensors, "opt_d", &trainer.state.discriminator_opt);
        Ok(Self {
            config,
            state: trainer.state.clone(),
            tensors,
        })
    }

    /// Rebuilds a trainer positioned exactly where the checkpoint left off.
    pub fn into_trainer(self) -> Result<Trainer> {
        let cfg = &self.config;
        let mut trainer = Trainer::new(&cfg.train, &cfg.network, &cfg.embedder, &cfg.weights)?;
        restore_params(&self.tensors, "g", &trainer.params.generator)?;
        restore_params(&self.tensors, "d", &trainer.params.discriminator)?;
        let mut state = self.state;
        state.generator_opt = restore_moments(&self.tensors, "opt_g", state.generator_opt.step)?;
        state.discriminator_opt = restore_moments(&self.tensors, "opt_d", state.discriminator_opt.step)?;
        trainer.state = state;
        trainer.restore_optimizers_from_state();
        Ok(trainer)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let dtype = self.config.train.precision.dtype();
        let mut data = Vec::new();
        let mut entries = Vec::with_capacity(self.tensors.len());
        for (name, t) in &self.tensors {
            let flat = t.flatten_all()?;
            match dtype {
                DType::F32 => flat.to_dtype(DType::F32)?.to_vec1::<f32>()?.iter().for_each(|v| data.extend_from_slice(&v.to_le_bytes())),
                _ => flat.to_dtype(DType::F64)?.to_vec1::<f64>()?.iter().for_each(|v| data.extend_from_slice(&v.to_le_bytes())),
            }
            entries.push(TensorEntry {
                name: name.clone(),
                shape: t.dims().to_vec(),
            });
        }
        let header = Header {
            config: self.config.clone(),
            dtype: dtype_name(dtype)?.to_string(),
            generator_opt_step: self.state.generator_opt.step,
            discriminator_opt_step: self.state.discriminator_opt.step,
            state: self.state.clone(),
            tensors: entries,
            data_sha256: hex(&Sha256::digest(&data)),
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(20 + header.len() + data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&data);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |msg: &str| Error::Validation(format!("corrupt checkpoint: {msg}"));
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let header_end = 20usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| corrupt("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[20..header_end]).map_err(|e| corrupt(&e.to_string()))?;
        let data = &bytes[header_end..];
        if hex(&Sha256::digest(data)) != header.data_sha256 {
            return Err(corrupt("data checksum mismatch"));
        }
        let (dtype, width) = match header.dtype.as_str() {
            "f32" => (DType::F32, 4),
            "f64" => (DType::F64, 8),
            other => return Err(corrupt(&format!("unknown dtype {other}"))),
        };
        let target = header.config.train.precision.dtype();
        let mut offset = 0;
        let mut tensors = BTreeMap::new();
        for e in header.tensors {
            let n: usize = e.shape.iter().product();
            let chunk = data
                .get(offset..offset + n * width)
                .ok_or_else(|| corrupt("truncated data"))?;
            offset += n * width;
            let t = match dtype {
                DType::F32 => {
                    let v: Vec<f32> = chunk.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
                    Tensor::from_vec(v, e.shape.as_slice(), &Device::Cpu)?
                }
                _ => {
                    let v: Vec<f64> = chunk.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
                    Tensor::from_vec(v, e.shape.as_slice(), &Device::Cpu)?
                }
            };
            tensors.insert(e.name, t.to_dtype(target)?);
        }
        if offset != data.len() {
            return Err(corrupt("trailing data"));
        }
        let mut state = header.state;
        state.generator_opt.step = header.generator_opt_step;
        state.discriminator_opt.step = header.discriminator_opt_step;
        Ok(Self {
            config: header.config,
            state,
            tensors,
        })
    }

    /// Writes atomically through a temporary sibling file.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&self.to_bytes()?)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
