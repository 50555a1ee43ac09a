//! Finite-difference audit of every differentiable operation and of the
//! full network, run in `f64`.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::encodings::{apply_location_encoding, CoordConvParams, LocationMode};
use crate::error::Result;
use crate::model::{init_parameters, model_forward, ModelConfig};
use crate::seed;
use crate::tensor::gradcheck::{finite_difference_check, relative_error};
use crate::tensor::ops::{self, Elementwise, Interpolation, Padding, PoolKind};
use crate::tensor::{Tensor, TensorData};
use crate::train::{cross_entropy, softmax_cross_entropy};

/// Central-difference step for single operations.
pub const OP_STEP: f64 = 1e-3;
/// Starting step for the end-to-end check.
///
/// ReLU and max-pool kinks are dense in a whole network, so a stencil can
/// straddle one. The central difference is recomputed at each of
/// [`REFINED_STEPS`] until two consecutive steps agree; the finer of the pair
/// is used. If none agree the estimate at `MODEL_STEP` stands.
pub const MODEL_STEP: f64 = 1e-4;
pub const REFINED_STEPS: &[f64] = &[1e-5, 1e-6, 1e-7];
pub const TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub instances: usize,
    pub worst: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.worst < TOLERANCE
    }
}

type Objective = Box<dyn Fn(&Tensor<f64>) -> Result<Tensor<f64>>>;

/// One randomized instance: the point to differentiate at and a scalar function of it.
struct Case {
    x: TensorData<f64>,
    f: Objective,
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> TensorData<f64> {
    TensorData::from_fn(shape.to_vec(), |_| rng.gen_range(lo..hi))
}

/// Values at least `gap` away from zero, so ReLU kinks sit outside the stencil.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize], gap: f64) -> TensorData<f64> {
    TensorData::from_fn(shape.to_vec(), |_| {
        let v: f64 = rng.gen_range(gap..1.0);
        if rng.gen_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

/// Distinct values spaced well beyond the step, so max-pool winners never swap.
fn distinct(rng: &mut ChaCha8Rng, shape: &[usize]) -> TensorData<f64> {
    let n: usize = shape.iter().product();
    let mut ranks: Vec<usize> = (0..n).collect();
    ranks.shuffle(rng);
    TensorData::new(shape.to_vec(), ranks.into_iter().map(|r| r as f64 * 0.05 - 1.0).collect()).expect("shape")
}

fn labels(rng: &mut ChaCha8Rng, n: usize, classes: usize) -> Vec<u8> {
    (0..n).map(|_| rng.gen_range(0..classes) as u8).collect()
}

/// `Σ y ⊙ r` for a fixed random `r`, so every output element carries a distinct upstream gradient.
fn project(rng: &mut ChaCha8Rng, shape: &[usize]) -> impl Fn(&Tensor<f64>) -> Result<Tensor<f64>> {
    let r = Tensor::constant(uniform(rng, shape, -1.0, 1.0));
    move |y: &Tensor<f64>| Ok(ops::sum(&ops::mul(y, &r)?))
}

fn constant(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::constant(uniform(rng, shape, -1.0, 1.0))
}

fn op_cases(name: &str, rng: &mut ChaCha8Rng) -> Case {
    let h = rng.gen_range(2..5);
    let w = rng.gen_range(2..5);
    let c = rng.gen_range(1..4);
    let map = [h, w, c];
    let case = |x: TensorData<f64>, f: Objective| Case { x, f };
    match name {
        "conv2d/input" | "conv2d/weight" | "conv2d/bias" => {
            let k = *[1usize, 3].choose(rng).unwrap();
            let cout = rng.gen_range(1..4);
            let wshape = [k, k, c, cout];
            let proj = project(rng, &[h, w, cout]);
            match name {
                "conv2d/input" => {
                    let (wt, b) = (constant(rng, &wshape), constant(rng, &[cout]));
                    case(uniform(rng, &map, -1.0, 1.0), Box::new(move |x| proj(&ops::conv2d(x, &wt, &b, Padding::Same)?)))
                }
                "conv2d/weight" => {
                    let (x, b) = (constant(rng, &map), constant(rng, &[cout]));
                    case(uniform(rng, &wshape, -1.0, 1.0), Box::new(move |wt| proj(&ops::conv2d(&x, wt, &b, Padding::Same)?)))
                }
                _ => {
                    let (x, wt) = (constant(rng, &map), constant(rng, &wshape));
                    case(uniform(rng, &[cout], -1.0, 1.0), Box::new(move |b| proj(&ops::conv2d(&x, &wt, b, Padding::Same)?)))
                }
            }
        }
        "conv2d_valid/input" => {
            let wt = constant(rng, &[2, 2, c, 2]);
            let b = constant(rng, &[2]);
            let proj = project(rng, &[h - 1, w - 1, 2]);
            case(uniform(rng, &map, -1.0, 1.0), Box::new(move |x| proj(&ops::conv2d(x, &wt, &b, Padding::Valid)?)))
        }
        "fully_connected/input" | "fully_connected/weight" | "fully_connected/bias" => {
            let (din, dout) = (rng.gen_range(1..6), rng.gen_range(1..6));
            let proj = project(rng, &[dout]);
            match name {
                "fully_connected/input" => {
                    let (wt, b) = (constant(rng, &[din, dout]), constant(rng, &[dout]));
                    case(uniform(rng, &[din], -1.0, 1.0), Box::new(move |x| proj(&ops::fully_connected(x, &wt, &b)?)))
                }
                "fully_connected/weight" => {
                    let (x, b) = (constant(rng, &[din]), constant(rng, &[dout]));
                    case(uniform(rng, &[din, dout], -1.0, 1.0), Box::new(move |wt| proj(&ops::fully_connected(&x, wt, &b)?)))
                }
                _ => {
                    let (x, wt) = (constant(rng, &[din]), constant(rng, &[din, dout]));
                    case(uniform(rng, &[dout], -1.0, 1.0), Box::new(move |b| proj(&ops::fully_connected(&x, &wt, b)?)))
                }
            }
        }
        "max_pool" | "avg_pool" => {
            let k = rng.gen_range(1..4);
            let shape = [k * rng.gen_range(1..3), k * rng.gen_range(1..3), c];
            let kind = if name == "max_pool" { PoolKind::Max } else { PoolKind::Avg };
            let proj = project(rng, &[shape[0] / k, shape[1] / k, c]);
            case(distinct(rng, &shape), Box::new(move |x| proj(&ops::pool2d(x, kind, k)?)))
        }
        "global_avg_pool" => {
            let proj = project(rng, &[c]);
            case(uniform(rng, &map, -1.0, 1.0), Box::new(move |x| proj(&ops::global_avg_pool(x)?)))
        }
        "upsample_nearest" | "upsample_bilinear" => {
            let f = rng.gen_range(1..5);
            let kind = if name == "upsample_nearest" { Interpolation::Nearest } else { Interpolation::Bilinear };
            let proj = project(rng, &[h * f, w * f, c]);
            case(uniform(rng, &map, -1.0, 1.0), Box::new(move |x| proj(&ops::upsample(x, kind, f)?)))
        }
        "relu" => {
            let proj = project(rng, &map);
            case(away_from_zero(rng, &map, 0.01), Box::new(move |x| proj(&ops::relu(x))))
        }
        "sigmoid" => {
            let proj = project(rng, &map);
            case(uniform(rng, &map, -4.0, 4.0), Box::new(move |x| proj(&ops::sigmoid(x))))
        }
        "log1p" => {
            let proj = project(rng, &map);
            case(uniform(rng, &map, -0.5, 2.0), Box::new(move |x| proj(&ops::log1p(x))))
        }
        "softmax_channels" => {
            let proj = project(rng, &map);
            case(uniform(rng, &map, -3.0, 3.0), Box::new(move |x| proj(&ops::softmax_channels(x))))
        }
        "concat_channels" => {
            let c2 = rng.gen_range(1..4);
            let other = constant(rng, &[h, w, c2]);
            let first = rng.gen_bool(0.5);
            let proj = project(rng, &[h, w, c + c2]);
            case(
                uniform(rng, &map, -1.0, 1.0),
                Box::new(move |x| {
                    let y = if first { ops::concat_channels(x, &other)? } else { ops::concat_channels(&other, x)? };
                    proj(&y)
                }),
            )
        }
        "broadcast_add_channels/map" => {
            let v = constant(rng, &[c]);
            let proj = project(rng, &map);
            case(uniform(rng, &map, -1.0, 1.0), Box::new(move |x| proj(&ops::broadcast_add_channels(x, &v)?)))
        }
        "broadcast_add_channels/vec" => {
            let m = constant(rng, &map);
            let proj = project(rng, &map);
            case(uniform(rng, &[c], -1.0, 1.0), Box::new(move |v| proj(&ops::broadcast_add_channels(&m, v)?)))
        }
        "add" | "mul" => {
            let kind = if name == "add" { Elementwise::Add } else { Elementwise::Mul };
            let other = constant(rng, &map);
            let proj = project(rng, &map);
            case(uniform(rng, &map, -1.0, 1.0), Box::new(move |x| proj(&ops::elementwise(x, &other, kind)?)))
        }
        "mul/self" => {
            let proj = project(rng, &map);
            case(uniform(rng, &map, -1.0, 1.0), Box::new(move |x| proj(&ops::mul(x, x)?)))
        }
        "normalize_channels" => {
            let proj = project(rng, &map);
            case(uniform(rng, &map, 0.1, 1.0), Box::new(move |x| proj(&ops::normalize_channels(x)?)))
        }
        "sum" => case(uniform(rng, &map, -1.0, 1.0), Box::new(|x| Ok(ops::sum(x)))),
        "coordconv" => {
            let wt = constant(rng, &[1, 1, c + 2, c]);
            let b = constant(rng, &[c]);
            let proj = project(rng, &map);
            case(
                uniform(rng, &map, -1.0, 1.0),
                Box::new(move |x| {
                    let p = CoordConvParams { weight: &wt, bias: &b };
                    proj(&apply_location_encoding(x, LocationMode::CoordConv, Some(p))?)
                }),
            )
        }
        "pe2d" => {
            let shape = [h, w, 4 * rng.gen_range(1..3)];
            let proj = project(rng, &shape);
            case(uniform(rng, &shape, -1.0, 1.0), Box::new(move |x| proj(&apply_location_encoding(x, LocationMode::Pe2d, None)?)))
        }
        "cross_entropy" => {
            let k = rng.gen_range(2..6);
            let shape = [h, w, k];
            let l = labels(rng, h * w, k);
            case(uniform(rng, &shape, 0.05, 1.0), Box::new(move |p| cross_entropy(p, &l)))
        }
        "softmax_cross_entropy" => {
            let k = rng.gen_range(2..6);
            let shape = [h, w, k];
            let l = labels(rng, h * w, k);
            case(uniform(rng, &shape, -3.0, 3.0), Box::new(move |s| softmax_cross_entropy(s, &l)))
        }
        other => unreachable!("unknown op check {other}"),
    }
}

pub const OP_CHECKS: &[&str] = &[
    "conv2d/input",
    "conv2d/weight",
    "conv2d/bias",
    "conv2d_valid/input",
    "fully_connected/input",
    "fully_connected/weight",
    "fully_connected/bias",
    "max_pool",
    "avg_pool",
    "global_avg_pool",
    "upsample_nearest",
    "upsample_bilinear",
    "relu",
    "sigmoid",
    "log1p",
    "softmax_channels",
    "concat_channels",
    "broadcast_add_channels/map",
    "broadcast_add_channels/vec",
    "add",
    "mul",
    "mul/self",
    "normalize_channels",
    "sum",
    "coordconv",
    "pe2d",
    "cross_entropy",
    "softmax_cross_entropy",
];

/// Worst relative error per operation over `instances` random draws.
pub fn op_suite(instances: usize, seed: u64) -> Result<Vec<CheckResult>> {
    OP_CHECKS
        .iter()
        .map(|&name| {
            let mut rng = seed::rng(&[seed, seed::hash_str(name)]);
            let mut worst = 0.0f64;
            for _ in 0..instances {
                let c = op_cases(name, &mut rng);
                worst = worst.max(finite_difference_check(&c.f, &c.x, OP_STEP)?);
            }
            Ok(CheckResult { name: name.to_string(), instances, worst })
        })
        .collect()
}

/// Layer kind of a parameter name: `e1.conv2.weight` → `conv.weight`,
/// `d3.csu.fc2.bias` → `csu.fc2.bias`, `head.att.block1.weight` → `att.block.weight`.
pub fn parameter_kind(name: &str) -> String {
    let parts: Vec<&str> = name.split('.').collect();
    let strip = |s: &str| s.trim_end_matches(|c: char| c.is_ascii_digit()).to_string();
    match parts.as_slice() {
        ["head", "det", leaf] => format!("det.{leaf}"),
        ["head", "att", layer, leaf] => format!("att.{}.{leaf}", strip(layer)),
        [_, "csu", fc, leaf] => format!("csu.{fc}.{leaf}"),
        [stage, _, leaf] if stage.starts_with('e') => format!("enc.conv.{leaf}"),
        [_, _, leaf] => format!("dec.conv.{leaf}"),
        _ => name.to_string(),
    }
}

/// End-to-end check of the network loss on a random image and mask:
/// `per_kind` randomly chosen scalar entries of every parameter kind, plus
/// the biases perturbed away from zero so no ReLU sits exactly on its kink.
pub fn model_suite(config: &ModelConfig, seed: u64, per_kind: usize) -> Result<Vec<CheckResult>> {
    config.validate()?;
    let mut rng = seed::rng(&[seed, 0x6772_6164]);
    let mut params = init_parameters(config, seed)?;
    for (name, v) in params.iter_mut() {
        if name.ends_with(".bias") {
            v.data_mut().iter_mut().for_each(|b| *b = rng.gen_range(-0.1..0.1));
        }
    }
    let image = Tensor::constant(uniform(&mut rng, &[config.input_h, config.input_w, config.in_channels], 0.0, 1.0));
    let mask = labels(&mut rng, config.input_h * config.input_w, config.num_classes);
    let month = rng.gen_range(1..=12u8);

    let bound = params.bind::<f64>(true);
    let out = model_forward(&image, month, &bound, config)?;
    softmax_cross_entropy(&out.loss_scores()?, &mask)?.backward()?;
    let grads = bound.gradients_f64()?;

    let loss_at = |name: &str, index: usize, delta: f64| -> Result<f64> {
        let mut p = params.bind::<f64>(false);
        let mut value = p.get(name)?.value().clone();
        value.data_mut()[index] += delta;
        p.replace(name, Tensor::constant(value))?;
        let out = model_forward(&image, month, &p, config)?;
        softmax_cross_entropy(&out.loss_scores()?, &mask)?.item()
    };

    let mut by_kind: BTreeMap<String, Vec<(String, usize)>> = BTreeMap::new();
    for (name, v) in params.iter() {
        let kind = parameter_kind(name);
        for i in 0..v.numel() {
            by_kind.entry(kind.clone()).or_default().push((name.to_string(), i));
        }
    }
    let mut results = Vec::new();
    for (kind, mut entries) in by_kind {
        entries.shuffle(&mut rng);
        entries.truncate(per_kind);
        let mut worst = 0.0f64;
        for (name, i) in &entries {
            let central = |h: f64| -> Result<f64> { Ok((loss_at(name, *i, h)? - loss_at(name, *i, -h)?) / (2.0 * h)) };
            let mut coarse = central(MODEL_STEP)?;
            let mut numeric = coarse;
            for &h in REFINED_STEPS {
                let fine = central(h)?;
                if relative_error(coarse, fine) < TOLERANCE {
                    numeric = fine;
                    break;
                }
                coarse = fine;
            }
            worst = worst.max(relative_error(grads[name].data()[*i], numeric));
        }
        results.push(CheckResult { name: kind, instances: entries.len(), worst });
    }
    Ok(results)
}
