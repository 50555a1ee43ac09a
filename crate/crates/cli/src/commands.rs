use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use lsenet::data::{dataset_read, dataset_write, lst, synth_splits, DatasetManifest, Sample, SplitTag};
use lsenet::gradcheck::{model_suite, op_suite, CheckResult, TOLERANCE};
use lsenet::io::{create_dir_all, write_atomic, write_json};
use lsenet::metrics::{binary_class_names, class_names, export_heatmap, miou, report, HeatmapFormat, Report};
use lsenet::model::{model_forward, ModelConfig, ModelOutput};
use lsenet::tensor::{Tensor, TensorData};
use lsenet::train::{checkpoint_load, evaluate, train_init, train_loop, Checkpoint, LoopOptions, FINAL_DIR};
use lsenet::Error;

use crate::config::RunConfig;
use crate::{CliError, CliResult};

pub const SPLITS: [(&str, SplitTag); 3] = [("train", SplitTag::Train), ("val", SplitTag::Val), ("test", SplitTag::Test)];
pub const CONFIG_COPY: &str = "config.json";
pub const REPORT_STEM: &str = "report";
pub const BINARY_REPORT_STEM: &str = "binary_report";

/// Refuses a non-empty `dir` unless `force`, in which case it is cleared.
fn claim_output(dir: &Path, force: bool) -> CliResult<()> {
    let occupied = match std::fs::read_dir(dir) {
        Ok(mut entries) => entries.next().is_some(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => false,
        Err(e) => return Err(CliError::usage(format!("cannot inspect {}: {e}", dir.display()))),
    };
    if occupied {
        if !force {
            return Err(CliError::usage(format!("{} exists and is not empty; pass --force to overwrite", dir.display())));
        }
        std::fs::remove_dir_all(dir).map_err(|e| CliError::usage(format!("cannot clear {}: {e}", dir.display())))?;
    }
    Ok(create_dir_all(dir)?)
}

fn class_pixel_table(name: &str, samples: &[Sample], classes: usize) -> String {
    let mut counts = vec![0u64; classes];
    for s in samples {
        for &l in s.labels.data() {
            counts[usize::from(l)] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    let mut out = format!("{name}: {} samples\n", samples.len());
    for (n, c) in class_names(classes).iter().zip(&counts) {
        writeln!(out, "  {n:<12} {c:>10} {:>8.4}%", 100.0 * *c as f64 / total.max(1) as f64).unwrap();
    }
    out
}

/// Generates the train, val and test datasets under `out`.
pub fn synth(cfg: &RunConfig, out: &Path, force: bool) -> CliResult<String> {
    cfg.validate()?;
    let d = &cfg.data;
    let splits = synth_splits(&d.synth, d.train_per_month, d.test_per_month, cfg.train.val_fraction)?;
    claim_output(out, force)?;
    let mut text = String::new();
    for ((name, tag), samples) in SPLITS.iter().zip([&splits.train, &splits.val, &splits.test]) {
        let manifest = DatasetManifest::describe(samples, cfg.model.num_classes, &splits.normalization, *tag)?;
        dataset_write(samples, &manifest, &out.join(name))?;
        text.push_str(&class_pixel_table(name, samples, cfg.model.num_classes));
    }
    write_json(&out.join(CONFIG_COPY), cfg)?;
    Ok(text)
}

fn check_geometry(m: &DatasetManifest, model: &ModelConfig, dir: &Path) -> CliResult<()> {
    if (m.height, m.width) != (model.input_h, model.input_w) || m.num_classes != model.num_classes {
        return Err(CliError::from(Error::Validation(format!(
            "dataset {} is {}×{} with {} classes; the model expects {}×{} with {}",
            dir.display(),
            m.height,
            m.width,
            m.num_classes,
            model.input_h,
            model.input_w,
            model.num_classes
        ))));
    }
    Ok(())
}

fn load_split(dir: &Path, model: &ModelConfig) -> CliResult<Vec<Sample>> {
    let ds = dataset_read(dir)?;
    check_geometry(&ds.manifest, model, dir)?;
    Ok(ds.load_all()?)
}

/// Trains on `data/train`, validating on `data/val` when present.
pub fn train(cfg: &RunConfig, data: &Path, out: &Path, force: bool, resume: bool) -> CliResult<String> {
    cfg.validate()?;
    let train_set = load_split(&data.join("train"), &cfg.model)?;
    let val_dir = data.join("val");
    let val_set = if val_dir.exists() { load_split(&val_dir, &cfg.model)? } else { Vec::new() };

    let state = if resume {
        let mut state = checkpoint_load(&out.join(FINAL_DIR), Some(&cfg.model))?;
        let saved = state.train.clone().unwrap_or_default();
        if (lsenet::train::TrainConfig { epochs: cfg.train.epochs, ..saved }) != cfg.train {
            return Err(Error::Validation("training settings differ from the checkpoint being resumed".into()).into());
        }
        state.train = Some(cfg.train.clone());
        state
    } else {
        let state = train_init(&cfg.model, &cfg.train)?;
        claim_output(out, force)?;
        state
    };
    write_json(&out.join(CONFIG_COPY), cfg)?;
    let opts = LoopOptions { out_dir: Some(out.to_path_buf()), stop_after: None };
    let outcome = train_loop(state, &train_set, &val_set, &opts)?;
    let mut text = String::new();
    for r in &outcome.history {
        writeln!(text, "epoch {:>3}  train {:.5}  val {:.5}  lr {:e}", r.epoch, r.train_loss, r.val_loss, r.lr).unwrap();
    }
    writeln!(text, "checkpoint {}", out.join(FINAL_DIR).display()).unwrap();
    Ok(text)
}

fn write_report(r: &Report, out: &Path, stem: &str) -> CliResult<()> {
    write_atomic(&out.join(format!("{stem}.txt")), r.to_text().as_bytes())?;
    Ok(write_json(&out.join(format!("{stem}.json")), &r.to_json())?)
}

/// Per-class IoU report of a checkpoint on a dataset; with `binary` the
/// two-class report is derived from the same confusion matrix.
pub fn eval(checkpoint: &Path, data: &Path, out: &Path, binary: bool, expected: Option<&ModelConfig>) -> CliResult<String> {
    let ckpt = checkpoint_load(checkpoint, expected)?;
    let samples = load_split(data, &ckpt.model)?;
    let cm = evaluate(&ckpt.params, &ckpt.model, &samples)?;
    create_dir_all(out)?;
    let full = report(&cm, &class_names(cm.classes()))?;
    write_report(&full, out, REPORT_STEM)?;
    let mut text = full.to_text();
    if binary {
        let b = report(&cm.collapse(), &binary_class_names())?;
        write_report(&b, out, BINARY_REPORT_STEM)?;
        text.push('\n');
        text.push_str(&b.to_text());
    }
    log::info!("mIoU {:?}", miou(&cm));
    Ok(text)
}

/// Where the input of `predict` and `attention` comes from.
#[derive(Clone, Debug)]
pub enum InputSpec {
    /// A sample of a dataset directory, by id.
    Dataset { dir: PathBuf, id: String },
    /// A normalized `H×W×3` `LST1` image and its month.
    Image { path: PathBuf, month: u8 },
}

impl InputSpec {
    pub fn resolve(input: &Path, id: Option<String>, month: Option<u8>) -> CliResult<Self> {
        if input.is_dir() {
            let id = id.ok_or_else(|| CliError::usage("a dataset input needs --id"))?;
            Ok(InputSpec::Dataset { dir: input.to_path_buf(), id })
        } else {
            let month = month.ok_or_else(|| CliError::usage("an image input needs --month"))?;
            Ok(InputSpec::Image { path: input.to_path_buf(), month })
        }
    }

    fn load(&self) -> CliResult<(TensorData<f32>, u8)> {
        match self {
            InputSpec::Dataset { dir, id } => {
                let ds = dataset_read(dir)?;
                let i = ds
                    .manifest
                    .samples
                    .iter()
                    .position(|e| &e.id == id)
                    .ok_or_else(|| CliError::usage(format!("no sample {id} in {}", dir.display())))?;
                let s = ds.load(i)?;
                Ok((s.image, s.month))
            }
            InputSpec::Image { path, month } => Ok((lst::read::<f32>(path)?, *month)),
        }
    }
}

fn run_model(ckpt: &Checkpoint, input: &InputSpec) -> CliResult<ModelOutput> {
    let (image, month) = input.load()?;
    let m = &ckpt.model;
    if image.shape() != [m.input_h, m.input_w, m.in_channels] {
        return Err(Error::Validation(format!(
            "input shape {:?} does not match the model input {}×{}×{}",
            image.shape(),
            m.input_h,
            m.input_w,
            m.in_channels
        ))
        .into());
    }
    Ok(model_forward(&Tensor::constant(image), month, &ckpt.params.bind::<f32>(false), m)?)
}

/// Writes the argmax label mask as `LST1` `u8`, plus an optional greyscale rendering.
pub fn predict(checkpoint: &Path, input: &InputSpec, out: &Path, pgm: Option<&Path>) -> CliResult<String> {
    let ckpt = checkpoint_load(checkpoint, None)?;
    let output = run_model(&ckpt, input)?;
    let (h, w) = (ckpt.model.input_h, ckpt.model.input_w);
    let mask = TensorData::new([h, w], output.prediction())?;
    lst::write(out, &mask)?;
    if let Some(p) = pgm {
        let top = (ckpt.model.num_classes - 1) as f32;
        let grey = TensorData::new([h, w], mask.data().iter().map(|&l| f32::from(l) / top).collect())?;
        export_heatmap(&grey, p, HeatmapFormat::Pgm)?;
    }
    Ok(format!("wrote {h}×{w} mask to {}\n", out.display()))
}

fn channel(t: &TensorData<f32>, k: usize) -> TensorData<f32> {
    let &[h, w, n] = t.shape() else { unreachable!("attention maps are h×w×n") };
    TensorData::from_fn([h, w], |i| t.data()[i * n + k])
}

pub const GRID_DIR: &str = "grid";
pub const UPSAMPLED_DIR: &str = "upsampled";

/// One PGM and one CSV heatmap per class, at grid and at input resolution.
pub fn attention(checkpoint: &Path, input: &InputSpec, out: &Path) -> CliResult<String> {
    let ckpt = checkpoint_load(checkpoint, None)?;
    if !ckpt.model.attention_enabled {
        return Err(Error::Validation("the checkpoint's model has no attention branch".into()).into());
    }
    let output = run_model(&ckpt, input)?;
    let grid = output.attention.expect("attention enabled").value().clone();
    let up = output.attention_upsampled.expect("attention enabled").value().clone();
    let names = class_names(ckpt.model.num_classes);
    for (dir, maps) in [(GRID_DIR, &grid), (UPSAMPLED_DIR, &up)] {
        let d = out.join(dir);
        create_dir_all(&d)?;
        for (k, name) in names.iter().enumerate() {
            let map = channel(maps, k);
            export_heatmap(&map, &d.join(format!("{name}.pgm")), HeatmapFormat::Pgm)?;
            export_heatmap(&map, &d.join(format!("{name}.csv")), HeatmapFormat::Csv)?;
        }
    }
    Ok(format!(
        "wrote {} maps at {}×{} and {}×{}\n",
        names.len(),
        grid.shape()[0],
        grid.shape()[1],
        up.shape()[0],
        up.shape()[1]
    ))
}

/// Operator and end-to-end finite-difference checks on the toy network.
pub fn gradcheck(instances: usize, seed: u64) -> CliResult<(String, bool)> {
    let ops = op_suite(instances, seed)?;
    let net = model_suite(&ModelConfig::toy(), seed, 5)?;
    let mut text = String::new();
    let line = |text: &mut String, prefix: &str, r: &CheckResult| {
        let verdict = if r.passed() { "ok" } else { "FAIL" };
        writeln!(text, "{prefix}{:<28} {:>4}  worst {:.3e}  {verdict}", r.name, r.instances, r.worst).unwrap();
    };
    for r in &ops {
        line(&mut text, "op  ", r);
    }
    for r in &net {
        line(&mut text, "net ", r);
    }
    let passed = ops.iter().chain(&net).all(CheckResult::passed);
    writeln!(text, "{} (tolerance {TOLERANCE:e})", if passed { "all checks passed" } else { "some checks FAILED" }).unwrap();
    Ok((text, passed))
}
