//! Checkpoint directories: `checkpoint.json` plus flat `LST1` blobs of the
//! parameters and, optionally, the Adam moments.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::lst;
use crate::error::{Error, Result};
use crate::io::{create_dir_all, read_json, write_json};
use crate::model::ModelConfig;
use crate::tensor::{ParameterSet, TensorData};

use super::{AdamState, PlateauSchedule, TrainConfig};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
const PARAMS_FILE: &str = "params.lst";
const ADAM_M_FILE: &str = "adam_m.lst";
const ADAM_V_FILE: &str = "adam_v.lst";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Element offset into the blob.
    offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerFiles {
    t: u64,
    m: String,
    v: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: u32,
    config_hash: String,
    model: ModelConfig,
    train: Option<TrainConfig>,
    epoch: usize,
    lr: f64,
    schedule: PlateauSchedule,
    best_val: Option<f64>,
    params_file: String,
    tensors: Vec<TensorEntry>,
    optimizer: Option<OptimizerFiles>,
}

/// Everything needed to resume training or run inference.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub train: Option<TrainConfig>,
    pub params: ParameterSet,
    pub optimizer: Option<AdamState>,
    /// Number of completed epochs.
    pub epoch: usize,
    pub schedule: PlateauSchedule,
    pub best_val: Option<f64>,
}

fn flatten(set: &ParameterSet) -> TensorData<f32> {
    let data: Vec<f32> = set.iter().flat_map(|(_, v)| v.data().iter().copied()).collect();
    TensorData::new([data.len()], data).expect("flat")
}

fn unflatten(blob: &TensorData<f32>, entries: &[TensorEntry], path: &Path) -> Result<ParameterSet> {
    let mut set = ParameterSet::new();
    for e in entries {
        let n: usize = e.shape.iter().product();
        let slice = blob
            .data()
            .get(e.offset..e.offset + n)
            .ok_or_else(|| Error::format(path, format!("{} lies outside the blob", e.name)))?;
        set.insert(e.name.clone(), TensorData::new(e.shape.clone(), slice.to_vec())?)?;
    }
    Ok(set)
}

pub fn checkpoint_save(ckpt: &Checkpoint, dir: &Path) -> Result<()> {
    create_dir_all(dir)?;
    let mut offset = 0;
    let tensors = ckpt
        .params
        .iter()
        .map(|(name, v)| {
            let e = TensorEntry { name: name.to_string(), shape: v.shape().to_vec(), offset };
            offset += v.numel();
            e
        })
        .collect();
    lst::write(&dir.join(PARAMS_FILE), &flatten(&ckpt.params))?;
    let optimizer = match &ckpt.optimizer {
        Some(state) => {
            lst::write(&dir.join(ADAM_M_FILE), &flatten(&state.m))?;
            lst::write(&dir.join(ADAM_V_FILE), &flatten(&state.v))?;
            Some(OptimizerFiles { t: state.t, m: ADAM_M_FILE.into(), v: ADAM_V_FILE.into() })
        }
        None => None,
    };
    let manifest = Manifest {
        version: 1,
        config_hash: ckpt.model.hash(),
        model: ckpt.model.clone(),
        train: ckpt.train.clone(),
        epoch: ckpt.epoch,
        lr: ckpt.schedule.lr,
        schedule: ckpt.schedule.clone(),
        best_val: ckpt.best_val,
        params_file: PARAMS_FILE.into(),
        tensors,
        optimizer,
    };
    write_json(&dir.join(CHECKPOINT_FILE), &manifest)
}

/// Loads a checkpoint. With `expected` given, a checkpoint written for any
/// other model configuration is refused.
pub fn checkpoint_load(dir: &Path, expected: Option<&ModelConfig>) -> Result<Checkpoint> {
    let manifest_path = dir.join(CHECKPOINT_FILE);
    let m: Manifest = read_json(&manifest_path)?;
    if m.model.hash() != m.config_hash {
        return Err(Error::format(&manifest_path, "recorded config hash does not match the recorded model"));
    }
    if let Some(want) = expected {
        if want.hash() != m.config_hash {
            return Err(Error::ConfigMismatch { expected: want.hash(), found: m.config_hash });
        }
    }
    let shapes: Vec<(String, Vec<usize>)> = m.tensors.iter().map(|e| (e.name.clone(), e.shape.clone())).collect();
    if shapes != crate::model::parameter_shapes(&m.model).into_iter().collect::<std::collections::BTreeMap<_, _>>().into_iter().collect::<Vec<_>>() {
        return Err(Error::format(&manifest_path, "parameter list does not match the model configuration"));
    }
    let load = |file: &str| -> Result<ParameterSet> {
        let path = dir.join(file);
        let blob = lst::read::<f32>(&path)?;
        let total: usize = m.tensors.iter().map(|e| e.shape.iter().product::<usize>()).sum();
        if blob.numel() != total || blob.shape().len() != 1 {
            return Err(Error::format(&path, format!("blob holds {} values, manifest needs {total}", blob.numel())));
        }
        unflatten(&blob, &m.tensors, &path)
    };
    let params = load(&m.params_file)?;
    let optimizer = match &m.optimizer {
        Some(o) => Some(AdamState { m: load(&o.m)?, v: load(&o.v)?, t: o.t }),
        None => None,
    };
    Ok(Checkpoint {
        model: m.model,
        train: m.train,
        params,
        optimizer,
        epoch: m.epoch,
        schedule: m.schedule,
        best_val: m.best_val,
    })
}
