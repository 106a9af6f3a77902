use std::collections::{HashMap, HashSet};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{io_err, DataError};
use crate::decoder::Vocabulary;
use crate::encoder::FeatureStats;
use crate::lora::{TrainMode, TrainStrategy, LORA_A, LORA_B};
use crate::model::{AacModel, ModelConfig};
use crate::nn::{AdamWConfig, OptimizerState, ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LOAE";
pub const CHECKPOINT_VERSION: u32 = 1;
const PREAMBLE: usize = 4 + 4 + 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerHeader {
    pub config: AdamWConfig,
    pub step: u64,
    /// Parameters with moments; each contributes an `m` then a `v` blob.
    pub moments: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub stats: FeatureStats,
    pub tensors: Vec<TensorEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerHeader>,
}

fn push_blob(out: &mut Vec<u8>, t: &Tensor<f32>) {
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_checkpoint(model: &AacModel<f32>, optimizer: Option<&OptimizerState<f32>>) -> Vec<u8> {
    let tensors = model
        .params
        .iter()
        .map(|(name, t)| TensorEntry {
            name: name.to_string(),
            dtype: "f32".into(),
            shape: t.shape().to_vec(),
            trainable: model.params.is_trainable(name),
        })
        .collect();
    let header = CheckpointHeader {
        version: CHECKPOINT_VERSION,
        config: model.config.clone(),
        vocab: model.vocab.clone(),
        stats: model.stats.clone(),
        tensors,
        optimizer: optimizer.map(|o| OptimizerHeader {
            config: o.config,
            step: o.step,
            moments: o.moments.keys().cloned().collect(),
        }),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(PREAMBLE + json.len() + 4 * model.params.numel());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in model.params.iter() {
        push_blob(&mut out, t);
    }
    if let Some(o) = optimizer {
        for (m, v) in o.moments.values() {
            push_blob(&mut out, m);
            push_blob(&mut out, v);
        }
    }
    out
}

fn corrupt(msg: impl Into<String>) -> DataError {
    DataError::CorruptCheckpoint(msg.into())
}

fn numel(shape: &[usize]) -> Result<usize, DataError> {
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| corrupt(format!("shape {shape:?} overflows")))
}

/// Checks the tensor table against the shapes the header's configuration
/// implies, before anything is allocated.
fn check_table(h: &CheckpointHeader) -> Result<usize, DataError> {
    h.config.validate().map_err(|e| corrupt(e.to_string()))?;
    h.vocab.validate().map_err(|e| corrupt(e.to_string()))?;
    let bands = h.config.frontend.n_mels;
    if h.stats.mean.len() != bands || h.stats.std.len() != bands {
        return Err(corrupt("feature statistics do not match the mel band count"));
    }
    let c = &h.config;
    let layer_budget = c.encoder.layers + c.decoder.layers + c.bridge.cross_layers + c.bridge.self_layers;
    if layer_budget > h.tensors.len() {
        return Err(corrupt("tensor table is too small for the configured depth"));
    }
    let base: HashSet<String> = c.param_shapes(h.vocab.len()).into_iter().map(|(n, _)| n).collect();
    let mut all_lora = c.clone();
    all_lora.strategy = TrainStrategy::uniform(TrainMode::Lora);
    let allowed: HashMap<String, Vec<usize>> = all_lora.param_shapes(h.vocab.len()).into_iter().collect();

    let mut seen = HashSet::new();
    let mut total = 0usize;
    for t in &h.tensors {
        if t.dtype != "f32" {
            return Err(corrupt(format!("{}: unsupported dtype {:?}", t.name, t.dtype)));
        }
        if !seen.insert(t.name.as_str()) {
            return Err(corrupt(format!("duplicate tensor {:?}", t.name)));
        }
        match allowed.get(&t.name) {
            Some(shape) if *shape == t.shape => {}
            Some(shape) => {
                return Err(corrupt(format!("{}: shape {:?}, expected {shape:?}", t.name, t.shape)));
            }
            None => return Err(corrupt(format!("unexpected tensor {:?}", t.name))),
        }
        total = total.checked_add(numel(&t.shape)?).ok_or_else(|| corrupt("tensor table overflows"))?;
    }
    for name in &base {
        if !seen.contains(name.as_str()) {
            return Err(corrupt(format!("missing tensor {name:?}")));
        }
    }
    for name in &seen {
        if let Some(prefix) = name.strip_suffix(LORA_A) {
            if !seen.contains(format!("{prefix}{LORA_B}").as_str()) {
                return Err(corrupt(format!("adapter {name:?} has no {LORA_B}")));
            }
        }
        if let Some(prefix) = name.strip_suffix(LORA_B) {
            if !seen.contains(format!("{prefix}{LORA_A}").as_str()) {
                return Err(corrupt(format!("adapter {name:?} has no {LORA_A}")));
            }
        }
    }
    if let Some(o) = &h.optimizer {
        let shapes: HashMap<&str, &[usize]> = h.tensors.iter().map(|t| (t.name.as_str(), t.shape.as_slice())).collect();
        let mut moment_seen = HashSet::new();
        for name in &o.moments {
            if !moment_seen.insert(name.as_str()) {
                return Err(corrupt(format!("duplicate optimizer moment {name:?}")));
            }
            let shape = shapes
                .get(name.as_str())
                .ok_or_else(|| corrupt(format!("optimizer moment for unknown tensor {name:?}")))?;
            let n = numel(shape)?.checked_mul(2).ok_or_else(|| corrupt("moment table overflows"))?;
            total = total.checked_add(n).ok_or_else(|| corrupt("moment table overflows"))?;
        }
    }
    Ok(total)
}

struct Blobs<'a> {
    body: &'a [u8],
}

impl Blobs<'_> {
    fn take(&mut self, shape: &[usize]) -> Tensor<f32> {
        let n = shape.iter().product::<usize>();
        let (head, rest) = self.body.split_at(4 * n);
        self.body = rest;
        let data = head.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        Tensor::new(shape.to_vec(), data).expect("length checked")
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(AacModel<f32>, Option<OptimizerState<f32>>), DataError> {
    if bytes.len() < PREAMBLE {
        return Err(corrupt(format!("{} bytes is shorter than the preamble", bytes.len())));
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(DataError::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let rest = &bytes[PREAMBLE..];
    if hlen > rest.len() as u64 {
        return Err(corrupt(format!("header length {hlen} exceeds file size")));
    }
    let (json, body) = rest.split_at(hlen as usize);
    let header: CheckpointHeader = serde_json::from_slice(json).map_err(|e| corrupt(format!("header: {e}")))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(DataError::VersionMismatch {
            found: header.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let total = check_table(&header)?;
    let expected_bytes = total.checked_mul(4).ok_or_else(|| corrupt("tensor table overflows"))?;
    if body.len() != expected_bytes {
        return Err(corrupt(format!("body is {} bytes, table declares {expected_bytes}", body.len())));
    }

    let mut blobs = Blobs { body };
    let mut params = ParamStore::new();
    for t in &header.tensors {
        params.insert(t.name.clone(), blobs.take(&t.shape));
    }
    for t in &header.tensors {
        params.set_trainable(&t.name, t.trainable).expect("inserted above");
    }
    let optimizer = header.optimizer.as_ref().map(|o| {
        let mut moments = IndexMap::new();
        for name in &o.moments {
            let shape = params.get(name).expect("checked").shape().to_vec();
            let m = blobs.take(&shape);
            let v = blobs.take(&shape);
            moments.insert(name.clone(), (m, v));
        }
        OptimizerState {
            config: o.config,
            step: o.step,
            moments,
        }
    });
    let model = AacModel {
        config: header.config,
        vocab: header.vocab,
        stats: header.stats,
        params,
    };
    Ok((model, optimizer))
}

pub fn save_checkpoint(
    model: &AacModel<f32>,
    optimizer: Option<&OptimizerState<f32>>,
    path: impl AsRef<Path>,
) -> Result<(), DataError> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(model, optimizer)).map_err(io_err(path))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(AacModel<f32>, Option<OptimizerState<f32>>), DataError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    decode_checkpoint(&bytes)
}
