use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{augment, Sample};
use crate::error::{arg_err, Error, Result};
use crate::io::create_dir_all;
use crate::metrics::ConfusionMatrix;
use crate::model::{init_parameters, model_forward, ModelConfig};
use crate::seed;
use crate::tensor::{ParameterSet, Tensor};

use super::checkpoint::{checkpoint_save, Checkpoint};
use super::{adam_step, softmax_cross_entropy, AdamState, PlateauSchedule, TrainConfig};

pub const LOG_FILE: &str = "train_log.jsonl";
pub const FINAL_DIR: &str = "final";
pub const BEST_DIR: &str = "best";

const DETECTION_WEIGHT: &str = "head.det.weight";
const SHUFFLE_STREAM: u64 = 0x5348_5546;

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

/// Fresh training state: initial parameters, zeroed optimizer, epoch 0.
///
/// The detection conv starts at zero so the first predictions are uniform;
/// with narrow widths a random head often drives the last decoder layer dead
/// within a few steps.
pub fn train_init(model: &ModelConfig, train: &TrainConfig) -> Result<Checkpoint> {
    model.validate()?;
    train.validate()?;
    let mut params = init_parameters(model, train.seed)?;
    let head = params.get_mut(DETECTION_WEIGHT).ok_or_else(|| Error::State(format!("no {DETECTION_WEIGHT}")))?;
    head.data_mut().fill(0.0);
    Ok(Checkpoint {
        model: model.clone(),
        train: Some(train.clone()),
        optimizer: Some(AdamState::new(&params)),
        params,
        epoch: 0,
        schedule: PlateauSchedule::new(train.lr0, train.lr_factor, train.plateau_patience),
        best_val: None,
    })
}

/// Loss and parameter gradients for a single sample.
pub fn sample_gradients(params: &ParameterSet, config: &ModelConfig, sample: &Sample) -> Result<(f64, ParameterSet)> {
    let bound = params.bind::<f32>(true);
    let out = model_forward(&Tensor::constant(sample.image.clone()), sample.month, &bound, config)?;
    let loss = softmax_cross_entropy(&out.loss_scores()?, sample.labels.data())?;
    loss.backward()?;
    Ok((f64::from(loss.item()?), bound.gradients()?))
}

pub fn sample_loss(params: &ParameterSet, config: &ModelConfig, sample: &Sample) -> Result<f64> {
    let bound = params.bind::<f32>(false);
    let out = model_forward(&Tensor::constant(sample.image.clone()), sample.month, &bound, config)?;
    Ok(f64::from(softmax_cross_entropy(&out.loss_scores()?, sample.labels.data())?.item()?))
}

/// Mean per-sample loss, no augmentation.
pub fn mean_loss(params: &ParameterSet, config: &ModelConfig, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(arg_err!("mean_loss over an empty set"));
    }
    let losses: Vec<f64> = samples.par_iter().map(|s| sample_loss(params, config, s)).collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Confusion matrix of the fused-score argmax over `samples`.
pub fn evaluate(params: &ParameterSet, config: &ModelConfig, samples: &[Sample]) -> Result<ConfusionMatrix> {
    let parts: Vec<ConfusionMatrix> = samples
        .par_iter()
        .map(|s| {
            let bound = params.bind::<f32>(false);
            let out = model_forward(&Tensor::constant(s.image.clone()), s.month, &bound, config)?;
            let mut cm = ConfusionMatrix::new(config.num_classes);
            cm.accumulate(&out.prediction(), s.labels.data())?;
            Ok(cm)
        })
        .collect::<Result<_>>()?;
    let mut total = ConfusionMatrix::new(config.num_classes);
    for cm in &parts {
        total.merge(cm)?;
    }
    Ok(total)
}

/// Where and how long [`train_loop`] runs.
#[derive(Clone, Debug, Default)]
pub struct LoopOptions {
    /// Run directory for the log and the `final/` and `best/` checkpoints.
    pub out_dir: Option<PathBuf>,
    /// Stop once this many epochs are complete, before the configured total.
    pub stop_after: Option<usize>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub state: Checkpoint,
    /// Records of the epochs run by this call.
    pub history: Vec<EpochRecord>,
}

fn check_samples(samples: &[Sample], config: &ModelConfig, what: &str) -> Result<()> {
    for s in samples {
        if s.image.shape() != [config.input_h, config.input_w, config.in_channels] {
            return Err(Error::Validation(format!(
                "{what} sample {} has shape {:?}, the model expects {}×{}×{}",
                s.id,
                s.image.shape(),
                config.input_h,
                config.input_w,
                config.in_channels
            )));
        }
        s.validate(config.num_classes)?;
    }
    Ok(())
}

fn sum_into(acc: &mut ParameterSet, g: &ParameterSet) {
    for (name, a) in acc.iter_mut() {
        let b = g.get(name).expect("same parameter set").data();
        a.data_mut().iter_mut().zip(b).for_each(|(x, y)| *x += y);
    }
}

/// Drops log lines past `epoch` so a resumed run appends where the checkpoint left off.
fn truncate_log(path: &Path, epoch: usize) -> Result<()> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut kept = String::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let rec: EpochRecord =
            serde_json::from_str(line).map_err(|e| Error::format(path, format!("bad log line: {e}")))?;
        if rec.epoch <= epoch {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    crate::io::write_atomic(path, kept.as_bytes())
}

fn append_log(path: &Path, rec: &EpochRecord) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    let line = serde_json::to_string(rec).expect("record serializes");
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))
}

/// Runs epochs `state.epoch + 1 ..= train.epochs`. Resuming from a saved
/// `final/` checkpoint reproduces an uninterrupted run exactly.
pub fn train_loop(mut state: Checkpoint, train_set: &[Sample], val_set: &[Sample], opts: &LoopOptions) -> Result<TrainOutcome> {
    let cfg = state.train.clone().ok_or_else(|| Error::State("checkpoint carries no training configuration".into()))?;
    let model = state.model.clone();
    cfg.validate()?;
    model.validate()?;
    if train_set.is_empty() {
        return Err(Error::Validation("training set is empty".into()));
    }
    check_samples(train_set, &model, "training")?;
    check_samples(val_set, &model, "validation")?;
    if val_set.is_empty() {
        log::warn!("validation set is empty; the schedule follows the training loss");
    }
    let mut optimizer = state.optimizer.take().unwrap_or_else(|| AdamState::new(&state.params));
    let adam = cfg.adam();

    let log_path = opts.out_dir.as_ref().map(|d| d.join(LOG_FILE));
    if let Some(dir) = &opts.out_dir {
        create_dir_all(dir)?;
        truncate_log(log_path.as_ref().unwrap(), state.epoch)?;
    }

    let last = opts.stop_after.map_or(cfg.epochs, |s| s.min(cfg.epochs));
    let mut history = Vec::new();
    for epoch in state.epoch + 1..=last {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut seed::rng(&[cfg.seed, SHUFFLE_STREAM, epoch as u64]));
        let lr = state.schedule.lr;
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let params = &state.params;
            let results: Vec<(f64, ParameterSet)> = batch
                .par_iter()
                .map(|&i| {
                    let s = &train_set[i];
                    let s = augment(s, seed::derive(&[cfg.seed, epoch as u64, seed::hash_str(&s.id)]), cfg.augment);
                    sample_gradients(params, &model, &s)
                })
                .collect::<Result<_>>()?;
            let mut grads = params.zeros_like();
            let mut batch_loss = 0.0;
            for (l, g) in &results {
                batch_loss += l;
                sum_into(&mut grads, g);
            }
            if !batch_loss.is_finite() || grads.iter().any(|(_, g)| !g.all_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            let scale = 1.0 / batch.len() as f32;
            grads.iter_mut().for_each(|(_, g)| g.data_mut().iter_mut().for_each(|v| *v *= scale));
            adam_step(&mut state.params, &grads, &mut optimizer, lr, &adam)?;
            loss_sum += batch_loss;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let val_loss = if val_set.is_empty() { train_loss } else { mean_loss(&state.params, &model, val_set)? };
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        let improved = state.best_val.map_or(true, |b| val_loss < b);
        if improved {
            state.best_val = Some(val_loss);
        }
        state.schedule.observe(val_loss);
        state.epoch = epoch;
        let rec = EpochRecord { epoch, train_loss, val_loss, lr };
        log::info!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5} lr {lr:e}");

        if let Some(dir) = &opts.out_dir {
            state.optimizer = Some(optimizer.clone());
            if improved {
                checkpoint_save(&state, &dir.join(BEST_DIR))?;
            }
            checkpoint_save(&state, &dir.join(FINAL_DIR))?;
            append_log(log_path.as_ref().unwrap(), &rec)?;
        }
        history.push(rec);
    }
    if let Some(dir) = &opts.out_dir {
        if !dir.join(FINAL_DIR).exists() {
            state.optimizer = Some(optimizer.clone());
            checkpoint_save(&state, &dir.join(FINAL_DIR))?;
        }
    }
    state.optimizer = Some(optimizer);
    Ok(TrainOutcome { state, history })
}
