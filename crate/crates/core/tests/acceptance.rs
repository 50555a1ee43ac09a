//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! `ACCEPTANCE=1,4,9` runs a subset. The ablation (criterion 8) trains six
//! desk-size networks and takes roughly an hour on one core.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use lsenet::data::{dataset_write, synth_splits, AugmentPolicy, DatasetManifest, Normalization, SplitTag, SynthConfig};
use lsenet::encodings::{positional_encoding_2d, PositionalEncodingSpec};
use lsenet::gradcheck::{model_suite, op_suite, CheckResult, OP_CHECKS};
use lsenet::io::write_atomic;
use lsenet::metrics::{binary_class_names, binary_collapse, class_names, miou, report, ConfusionMatrix};
use lsenet::model::{argmax_channels, head_forward, init_parameters, model_forward, parameter_shapes, ModelConfig};
use lsenet::tensor::{ops, Tensor, TensorData};
use lsenet::train::{evaluate, mean_loss, plateau_trace, train_init, train_loop, LoopOptions, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRAD_TOLERANCE: f64 = 1e-3;
const GRAD_INSTANCES: usize = 20;
const GRAD_BUDGET: Duration = Duration::from_secs(5 * 60);
const PAPER_FORWARD_BUDGET: Duration = Duration::from_secs(2 * 60);
const RANDOM_PAIRS: usize = 1000;
const PE_TOLERANCE: f64 = 1e-6;
const HEAD_TOLERANCE: f32 = 1e-6;
const HEAD_DRAWS: usize = 1000;
const OVERFIT_LOSS: f64 = 0.05;
const OVERFIT_MIOU: f64 = 0.95;
const OVERFIT_BUDGET: Duration = Duration::from_secs(10 * 60);
const ABLATION_SEEDS: [u64; 3] = [0, 1, 2];
const ABLATION_EPOCHS: usize = 25;
const ABLATION_BUDGET: Duration = Duration::from_secs(2 * 60 * 60);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn gradients() -> Verdict {
    let t0 = Instant::now();
    let ops = op_suite(GRAD_INSTANCES, 11).unwrap();
    let toy = ModelConfig::toy();
    assert!(toy.input_h <= 44 && toy.widths == [4, 8, 8, 8, 8]);
    // Five independent random networks and inputs, four entries per parameter kind each
    // (the smallest kind, the first attention conv bias, has exactly four).
    let mut merged: BTreeMap<String, CheckResult> = BTreeMap::new();
    for seed in 11..16 {
        for r in model_suite(&toy, seed, GRAD_INSTANCES / 5).unwrap() {
            let e = merged.entry(r.name.clone()).or_insert(CheckResult { instances: 0, worst: 0.0, ..r.clone() });
            e.instances += r.instances;
            e.worst = e.worst.max(r.worst);
        }
    }
    let net: Vec<CheckResult> = merged.into_values().collect();
    let elapsed = t0.elapsed();
    let all: Vec<&CheckResult> = ops.iter().chain(&net).collect();
    let worst = all.iter().map(|r| r.worst).fold(0.0, f64::max);
    let failed: Vec<&str> = all.iter().filter(|r| !(r.worst < GRAD_TOLERANCE)).map(|r| r.name.as_str()).collect();
    let enough = ops.len() == OP_CHECKS.len() && all.iter().all(|r| r.instances >= GRAD_INSTANCES);
    verdict(
        failed.is_empty() && enough && elapsed < GRAD_BUDGET,
        format!(
            "{} op checks and {} parameter kinds, >= {GRAD_INSTANCES} instances each, worst rel. error {worst:.2e}, failures {failed:?}, {elapsed:.1?}",
            ops.len(),
            net.len()
        ),
    )
}

fn shapes() -> Verdict {
    let cfg = ModelConfig::paper();
    let params = init_parameters(&cfg, 0).unwrap();
    let image = TensorData::from_fn([352, 352, 3], |i| (i % 97) as f32 / 97.0);
    let t0 = Instant::now();
    let out = model_forward(&Tensor::constant(image), 7, &params.bind::<f32>(false), &cfg).unwrap();
    let elapsed = t0.elapsed();
    let grid = out.attention.as_ref().map(|a| a.shape().to_vec());
    let census: BTreeMap<String, Vec<usize>> = parameter_shapes(&cfg).into_iter().collect();
    // fc rows of the first CSU: 3 (+12 month code) -> 32 -> 64
    let e1 = (census["e1.csu.fc1.weight"].clone(), census["e1.csu.fc2.weight"].clone());
    let pass = out.detection.shape() == [352, 352, 12]
        && grid.as_deref() == Some(&[32, 32, 12][..])
        && e1 == (vec![3, 32], vec![44, 64])
        && elapsed < PAPER_FORWARD_BUDGET;
    verdict(pass, format!("detection {:?}, attention {grid:?}, e1 csu fc {e1:?}, forward {elapsed:.1?}", out.detection.shape()))
}

fn metric_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    for _ in 0..RANDOM_PAIRS {
        let k = rng.gen_range(2..=6usize);
        let n = rng.gen_range(1..=16usize) * rng.gen_range(1..=16usize);
        let pred: Vec<u8> = (0..n).map(|_| rng.gen_range(0..k as u8)).collect();
        let truth: Vec<u8> = (0..n).map(|_| rng.gen_range(0..k as u8)).collect();
        let mut cm = ConfusionMatrix::new(k);
        cm.accumulate(&pred, &truth).unwrap();
        let brute: Vec<Option<(u64, u64)>> = (0..k as u8)
            .map(|c| {
                let i = pred.iter().zip(&truth).filter(|(p, t)| **p == c && **t == c).count() as u64;
                let u = pred.iter().zip(&truth).filter(|(p, t)| **p == c || **t == c).count() as u64;
                (u > 0).then_some((i, u))
            })
            .collect();
        if cm.iou_fractions() != brute {
            mismatches += 1;
        }
    }
    let mut spot = ConfusionMatrix::new(2);
    spot.accumulate(&[1, 1, 1, 0, 0], &[1, 1, 0, 1, 0]).unwrap();
    let spot_iou = lsenet::metrics::iou_per_class(&spot)[1];
    verdict(
        mismatches == 0 && spot_iou == Some(0.5),
        format!("{mismatches} mismatches over {RANDOM_PAIRS} pairs, TP=2 FP=1 FN=1 gives {spot_iou:?}"),
    )
}

fn positional() -> Verdict {
    let (h, w, d) = (32, 32, 64);
    let pe = positional_encoding_2d::<f32>(&PositionalEncodingSpec::new(h, w, d)).unwrap();
    let v = pe.data();
    let in_range = v.iter().all(|x| (-1.0..=1.0).contains(x));
    let origin = v[0] == 0.0 && v[1] == 1.0;
    let mut worst = 0.0f64;
    for x in 0..h {
        for y in 0..w {
            for c in 0..d {
                let (pos, k) = if c < d / 2 { (x, c) } else { (y, c - d / 2) };
                let angle = pos as f64 / 10_000f64.powf(4.0 * (k / 2) as f64 / d as f64);
                let want = if k % 2 == 0 { angle.sin() } else { angle.cos() };
                worst = worst.max((f64::from(v[(x * w + y) * d + c]) - want).abs());
            }
        }
    }
    let mut closest = f32::INFINITY;
    let px: Vec<&[f32]> = v.chunks_exact(d).collect();
    for i in 0..px.len() {
        for j in i + 1..px.len() {
            let dist = px[i].iter().zip(px[j]).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
            closest = closest.min(dist);
        }
    }
    verdict(
        in_range && origin && worst <= PE_TOLERANCE && closest > 0.0,
        format!("range ok {in_range}, origin ok {origin}, max deviation {worst:.2e}, closest pair distance {closest:.3e}"),
    )
}

fn head_algebra() -> Verdict {
    let cfg = ModelConfig::toy();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst, mut flips) = (0.0f32, 0);
    for draw in 0..HEAD_DRAWS {
        let mut params = init_parameters(&cfg, draw as u64).unwrap();
        for (_, t) in params.iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.2..0.2));
        }
        let a = TensorData::from_fn([16, 16, 4], |_| rng.gen_range(-2.0..2.0));
        let out = head_forward(&Tensor::constant(a), &params.bind::<f32>(false), &cfg).unwrap();
        let p = out.detection.data();
        let up = out.attention_upsampled.as_ref().unwrap().data();
        for ((f, p), w) in out.fused.data().iter().zip(p).zip(up) {
            worst = worst.max((f - p * (w + 1.0)).abs());
        }
        let renorm = ops::normalize_channels(&out.fused).unwrap();
        if argmax_channels(renorm.data(), 12) != out.prediction() {
            flips += 1;
        }
    }
    verdict(
        worst <= HEAD_TOLERANCE && flips == 0,
        format!("max |fused - P(W+1)| {worst:.2e}, argmax changes under renormalization in {flips} of {HEAD_DRAWS} draws"),
    )
}

fn schedule() -> Verdict {
    let fixed = plateau_trace(&[1.0, 0.9, 0.91, 0.92, 0.93], 1e-3, 0.5, 3);
    let fixed_ok = fixed == [1e-3, 1e-3, 1e-3, 1e-3, 5e-4];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0;
    for _ in 0..200 {
        let trace: Vec<f64> = (0..rng.gen_range(1..40)).map(|_| f64::from(rng.gen_range(0..8u8)) / 8.0).collect();
        let (mut lr, mut best, mut stale, mut want) = (1.0, f64::INFINITY, 0, Vec::new());
        for &l in &trace {
            if l < best {
                best = l;
                stale = 0;
            } else {
                stale += 1;
                if stale == 3 {
                    lr *= 0.5;
                    stale = 0;
                }
            }
            want.push(lr);
        }
        if plateau_trace(&trace, 1.0, 0.5, 3) != want {
            mismatches += 1;
        }
    }
    verdict(fixed_ok && mismatches == 0, format!("fixed trace gives {fixed:?}, {mismatches} mismatches on 200 scripted traces"))
}

fn toy_samples(n: usize) -> Vec<lsenet::data::Sample> {
    let mut all = lsenet::data::synth_generate(&SynthConfig::toy(0), 1).unwrap();
    all.truncate(n);
    let norm = Normalization::fit(&all);
    all.iter_mut().for_each(|s| norm.apply(&mut s.image));
    all
}

fn overfit() -> Verdict {
    let model = ModelConfig { input_h: 32, input_w: 32, ..ModelConfig::toy() };
    let train = TrainConfig {
        epochs: 200,
        batch_size: 1,
        lr0: 3e-3,
        plateau_patience: 10,
        augment: AugmentPolicy::NONE,
        ..TrainConfig::default()
    };
    let samples = toy_samples(8);
    let t0 = Instant::now();
    let out = train_loop(train_init(&model, &train).unwrap(), &samples, &[], &LoopOptions::default()).unwrap();
    let elapsed = t0.elapsed();
    let loss = mean_loss(&out.state.params, &model, &samples).unwrap();
    let m = miou(&evaluate(&out.state.params, &model, &samples).unwrap()).unwrap();
    verdict(
        loss < OVERFIT_LOSS && m >= OVERFIT_MIOU && elapsed < OVERFIT_BUDGET,
        format!("8 samples, 200 epochs: train loss {loss:.4}, train mIoU {m:.4}, {elapsed:.1?}"),
    )
}

fn ablation() -> Verdict {
    let t0 = Instant::now();
    let full = ModelConfig::desk();
    let base = full.basenet();
    let synth = SynthConfig::benchmark(full.input_h, full.input_w, 0);
    let data = synth_splits(&synth, 20, 5, TrainConfig::default().val_fraction).unwrap();
    let mut lines = Vec::new();
    let (mut sum_full, mut sum_base, mut violations) = (0.0, 0.0, Vec::new());
    for seed in ABLATION_SEEDS {
        let train = TrainConfig { epochs: ABLATION_EPOCHS, seed, ..TrainConfig::default() };
        let score = |model: &ModelConfig| {
            let out = train_loop(train_init(model, &train).unwrap(), &data.train, &data.val, &LoopOptions::default()).unwrap();
            100.0 * miou(&evaluate(&out.state.params, model, &data.test).unwrap()).unwrap()
        };
        let (f, b) = (score(&full), score(&base));
        eprintln!("  ablation seed {seed}: full {f:.2}, basenet {b:.2} ({:.0?} elapsed)", t0.elapsed());
        lines.push(format!("seed {seed} {f:.2}/{b:.2}"));
        if f < b {
            violations.push(seed);
        }
        sum_full += f;
        sum_base += b;
    }
    let n = ABLATION_SEEDS.len() as f64;
    let (mf, mb) = (sum_full / n, sum_base / n);
    let elapsed = t0.elapsed();
    verdict(
        mf >= mb && elapsed < ABLATION_BUDGET,
        format!(
            "{} train / {} val / {} test, {ABLATION_EPOCHS} epochs; mean test mIoU full {mf:.2} vs basenet {mb:.2}; {}; per-seed violations {violations:?}; {elapsed:.0?}",
            data.train.len(),
            data.val.len(),
            data.test.len(),
            lines.join(", ")
        ),
    )
}

fn binary() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut mismatches = 0;
    for _ in 0..RANDOM_PAIRS {
        let k = rng.gen_range(2..=12usize);
        let n = rng.gen_range(1..=256usize);
        let pred: Vec<u8> = (0..n).map(|_| rng.gen_range(0..k as u8)).collect();
        let truth: Vec<u8> = (0..n).map(|_| rng.gen_range(0..k as u8)).collect();
        let mut cm = ConfusionMatrix::new(k);
        cm.accumulate(&pred, &truth).unwrap();
        let mut direct = ConfusionMatrix::new(2);
        direct.accumulate(&binary_collapse(&pred), &binary_collapse(&truth)).unwrap();
        if cm.collapse() != direct || cm.collapse().iou_fractions() != direct.iou_fractions() {
            mismatches += 1;
        }
    }
    let mut cm = ConfusionMatrix::new(2);
    cm.accumulate(&[0, 1, 1], &[0, 1, 0]).unwrap();
    let text = report(&cm, &binary_class_names()).unwrap().to_text();
    let rows: Vec<&str> = text.lines().skip(2).filter_map(|l| l.split_whitespace().next()).collect();
    verdict(
        mismatches == 0 && rows == ["background", "front", "mIoU"],
        format!("{mismatches} mismatches over {RANDOM_PAIRS} pairs, binary rows {rows:?}"),
    )
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Dataset, training run and reports written from scratch into `dir`.
fn pipeline(dir: &Path) {
    let model = ModelConfig { input_h: 32, input_w: 32, ..ModelConfig::toy() };
    let s = synth_splits(&SynthConfig::toy(4), 1, 1, 0.25).unwrap();
    for (name, tag, samples) in [("train", SplitTag::Train, &s.train), ("val", SplitTag::Val, &s.val), ("test", SplitTag::Test, &s.test)] {
        let m = DatasetManifest::describe(samples, model.num_classes, &s.normalization, tag).unwrap();
        dataset_write(samples, &m, &dir.join("data").join(name)).unwrap();
    }
    let train = TrainConfig { epochs: 3, batch_size: 2, seed: 4, ..TrainConfig::default() };
    let opts = LoopOptions { out_dir: Some(dir.join("run")), stop_after: None };
    let out = train_loop(train_init(&model, &train).unwrap(), &s.train, &s.val, &opts).unwrap();
    let cm = evaluate(&out.state.params, &model, &s.test).unwrap();
    let r = report(&cm, &class_names(model.num_classes)).unwrap();
    let b = report(&cm.collapse(), &binary_class_names()).unwrap();
    write_atomic(&dir.join("report.txt"), r.to_text().as_bytes()).unwrap();
    write_atomic(&dir.join("report.json"), r.to_json().to_string().as_bytes()).unwrap();
    write_atomic(&dir.join("binary_report.txt"), b.to_text().as_bytes()).unwrap();
}

fn determinism() -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(a.path());
    pipeline(b.path());
    let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
    let differing: Vec<&str> = ta.iter().zip(&tb).filter(|(x, y)| x != y).map(|(x, _)| x.0.as_str()).collect();
    let has = |prefix: &str| ta.iter().any(|(p, _)| p.starts_with(prefix));
    let covered = has("data/train/manifest.json") && has("run/final/params.lst") && has("run/best/") && has("report.json");
    verdict(
        ta.len() == tb.len() && differing.is_empty() && covered,
        format!("{} files compared (datasets, checkpoints, log, reports), differing {differing:?}", ta.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [(usize, &str, fn() -> Verdict); 10] = [
        (1, "gradient suite", gradients),
        (2, "paper-scale shapes", shapes),
        (3, "metric oracle", metric_oracle),
        (4, "positional encoding", positional),
        (5, "head algebra", head_algebra),
        (6, "plateau schedule", schedule),
        (7, "toy overfit", overfit),
        (8, "directional ablation", ablation),
        (9, "binary collapse", binary),
        (10, "determinism", determinism),
    ];
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE").ok().map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    for (n, name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let v = check();
        println!("criterion {n:>2} {} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
