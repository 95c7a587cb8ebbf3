//! Named-tensor checkpoints.
//!
//! A checkpoint directory holds `checkpoint.json` (architecture, training
//! configuration, tensor table and cached training labels) and
//! `tensors.f64`, the raw little-endian `f64` values of every tensor in table
//! order. Parameters are stored at full precision so a reload reproduces
//! evaluation bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, ParamStore};
use crate::numerics::Tensor2;
use crate::train::{FeatureCache, TrainConfig, TrainedModel};

pub const HEADER_FILE: &str = "checkpoint.json";
pub const BLOB_FILE: &str = "tensors.f64";
pub const FORMAT_TAG: &str = "mintood-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

const CACHE_FEATURES: &str = "cache.features";
const CACHE_LOGITS: &str = "cache.logits";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Offset into the blob, in `f64` elements.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub best_epoch: Option<usize>,
    pub best_valid_wf1: Option<f64>,
    pub cache_labels: Vec<usize>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub trained: TrainedModel,
    pub train_config: TrainConfig,
}

pub fn save_checkpoint(trained: &TrainedModel, train_config: &TrainConfig, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tensors = Vec::new();
    let mut blob: Vec<u8> = Vec::new();
    let mut push = |name: &str, t: &Tensor2| {
        tensors.push(TensorEntry {
            name: name.to_string(),
            rows: t.rows(),
            cols: t.cols(),
            offset: blob.len() / 8,
        });
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    };
    for (name, t) in trained.model.store.iter() {
        push(name, t);
    }
    push(CACHE_FEATURES, &trained.cache.features);
    push(CACHE_LOGITS, &trained.cache.logits);

    let header = CheckpointHeader {
        format: FORMAT_TAG.into(),
        version: FORMAT_VERSION,
        model: trained.model.config.clone(),
        train: train_config.clone(),
        best_epoch: trained.best_epoch,
        best_valid_wf1: trained.best_valid_wf1,
        cache_labels: trained.cache.labels.clone(),
        tensors,
    };
    let json = serde_json::to_string_pretty(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let hp = dir.join(HEADER_FILE);
    fs::write(&hp, json + "\n").map_err(|e| Error::io(&hp, e))?;
    let bp = dir.join(BLOB_FILE);
    fs::write(&bp, &blob).map_err(|e| Error::io(&bp, e))?;
    Ok(dir.to_path_buf())
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let hp = dir.join(HEADER_FILE);
    let text = fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?;
    let header: CheckpointHeader =
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", hp.display())))?;
    if header.format != FORMAT_TAG || header.version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format {} v{}",
            header.format, header.version
        )));
    }
    let bp = dir.join(BLOB_FILE);
    let bytes = fs::read(&bp).map_err(|e| Error::io(&bp, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Checkpoint(format!("{} is not a whole number of f64 values", bp.display())));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();

    let mut store = ParamStore::new();
    let (mut features, mut logits) = (None, None);
    for e in &header.tensors {
        let len = e.rows * e.cols;
        let data = values
            .get(e.offset..e.offset + len)
            .ok_or_else(|| Error::Checkpoint(format!("tensor `{}` lies outside the blob", e.name)))?
            .to_vec();
        let t = Tensor2::from_vec(e.rows, e.cols, data)
            .map_err(|err| Error::Checkpoint(format!("tensor `{}`: {err}", e.name)))?;
        match e.name.as_str() {
            CACHE_FEATURES => features = Some(t),
            CACHE_LOGITS => logits = Some(t),
            _ => {
                store.insert(e.name.clone(), t)?;
            }
        }
    }
    let missing = |what: &str| Error::Checkpoint(format!("missing tensor `{what}`"));
    let cache = FeatureCache {
        features: features.ok_or_else(|| missing(CACHE_FEATURES))?,
        logits: logits.ok_or_else(|| missing(CACHE_LOGITS))?,
        labels: header.cache_labels,
    };
    let k = header.model.k;
    let model = Model::from_store(header.model, store)?;
    let scorers = cache.fit_scorers(k)?;
    Ok(Checkpoint {
        trained: TrainedModel {
            model,
            cache,
            scorers,
            best_epoch: header.best_epoch,
            best_valid_wf1: header.best_valid_wf1,
        },
        train_config: header.train,
    })
}
