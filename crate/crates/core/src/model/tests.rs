use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::encodings::{seasonal_one_hot, LocationMode, SeasonalMode};
use crate::error::Error;
use crate::tensor::{ops, ParameterSet, Tensor, TensorData};

fn random_image(config: &ModelConfig, seed: u64) -> TensorData<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TensorData::from_fn([config.input_h, config.input_w, config.in_channels], |_| rng.gen_range(0.0..1.0))
}

/// Initialized parameters with small random biases so no unit is trivially dead.
fn random_params(config: &ModelConfig, seed: u64) -> ParameterSet {
    let mut params = init_parameters(config, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    for (name, value) in params.iter_mut() {
        if name.ends_with(".bias") {
            value.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
        }
    }
    params
}

fn forward(config: &ModelConfig, params: &ParameterSet, image: &TensorData<f32>, month: u8) -> ModelOutput {
    let bound = params.bind::<f32>(false);
    model_forward(&Tensor::constant(image.clone()), month, &bound, config).unwrap()
}

#[test]
fn toy_shapes() {
    let cfg = ModelConfig::toy();
    let out = forward(&cfg, &random_params(&cfg, 1), &random_image(&cfg, 2), 3);
    assert_eq!(out.detection.shape(), &[16, 16, 12]);
    assert_eq!(out.attention.as_ref().unwrap().shape(), &[4, 4, 12]);
    assert_eq!(out.fused.shape(), &[16, 16, 12]);
    assert_eq!(out.prediction().len(), 256);
}

#[test]
fn toy_encoder_stage_one_shapes() {
    let cfg = ModelConfig { widths: vec![4, 8], ..ModelConfig::toy() };
    let params = random_params(&cfg, 1).bind::<f32>(false);
    let code = seasonal_one_hot(5, SeasonalMode::Month).unwrap();
    let image = Tensor::constant(random_image(&cfg, 3));
    let (skip, pooled) = encoder_forward(&image, Some(&code), &params, &cfg, 1).unwrap();
    assert_eq!(skip.shape(), &[16, 16, 4]);
    assert_eq!(pooled.unwrap().shape(), &[8, 8, 4]);
    let (bottom, none) = encoder_forward(&skip, Some(&code), &params, &cfg, 2).unwrap();
    assert_eq!(bottom.shape(), &[16, 16, 8]);
    assert!(none.is_none());
}

#[test]
fn three_stage_44_grid() {
    let cfg = ModelConfig { input_h: 44, input_w: 44, widths: vec![4, 8, 8], attention_r: 11, ..ModelConfig::toy() };
    cfg.validate().unwrap();
    let out = forward(&cfg, &random_params(&cfg, 4), &random_image(&cfg, 5), 8);
    assert_eq!(out.attention.unwrap().shape(), &[4, 4, 12]);
    assert_eq!(out.fused.shape(), &[44, 44, 12]);
}

#[test]
fn output_ranges() {
    let cfg = ModelConfig::toy();
    let out = forward(&cfg, &random_params(&cfg, 6), &random_image(&cfg, 7), 11);
    for px in out.detection.data().chunks_exact(12) {
        let s: f32 = px.iter().sum();
        assert!((s - 1.0).abs() < 1e-5);
    }
    assert!(out.attention.as_ref().unwrap().data().iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(out.fused.data().iter().all(|v| (0.0..=2.0).contains(v)));
    assert!(out.prediction().iter().all(|&c| c < 12));
}

#[test]
fn fused_is_detection_times_one_plus_attention() {
    let cfg = ModelConfig::toy();
    let out = forward(&cfg, &random_params(&cfg, 8), &random_image(&cfg, 9), 2);
    let up = out.attention_upsampled.as_ref().unwrap();
    for ((f, p), w) in out.fused.data().iter().zip(out.detection.data()).zip(up.data()) {
        assert!((f - p * (w + 1.0)).abs() < 1e-6);
    }
    let renorm = out.loss_distribution().unwrap();
    assert_eq!(argmax_channels(renorm.data(), 12), out.prediction());
    let via_scores = ops::softmax_channels(&out.loss_scores().unwrap());
    assert!(via_scores.value().max_abs_diff(renorm.value()).unwrap() < 1e-6);
}

#[test]
fn deterministic_forward() {
    let cfg = ModelConfig::toy();
    let params = random_params(&cfg, 10);
    let image = random_image(&cfg, 11);
    let a = forward(&cfg, &params, &image, 4);
    let b = forward(&cfg, &params, &image, 4);
    assert_eq!(a.fused.data(), b.fused.data());
    assert_eq!(a.attention.unwrap().data(), b.attention.unwrap().data());
}

#[test]
fn month_changes_output() {
    let cfg = ModelConfig::toy();
    let params = random_params(&cfg, 12);
    let image = random_image(&cfg, 13);
    let a = forward(&cfg, &params, &image, 6);
    let b = forward(&cfg, &params, &image, 7);
    assert_ne!(a.fused.data(), b.fused.data());

    // June and July share a season, so the season code cannot tell them apart
    let cfg = ModelConfig { seasonal_mode: SeasonalSetting::Season, ..cfg };
    let params = random_params(&cfg, 12);
    let a = forward(&cfg, &params, &image, 6);
    let b = forward(&cfg, &params, &image, 7);
    assert_eq!(a.fused.data(), b.fused.data());
}

#[test]
fn csu_zero_everything_gives_zero() {
    let cfg = ModelConfig::toy();
    let mut params = init_parameters(&cfg, 0).unwrap();
    params.iter_mut().for_each(|(_, v)| v.data_mut().fill(0.0));
    let bound = params.bind::<f32>(false);
    let code = seasonal_one_hot(1, SeasonalMode::Month).unwrap();
    let a = Tensor::constant(TensorData::<f32>::zeros([16, 16, 3]));
    let b2 = csu_forward(&a, Some(&code), &bound, "e1").unwrap();
    assert_eq!(b2.shape(), &[4]);
    assert!(b2.data().iter().all(|&v| v == 0.0));
}

#[test]
fn csu_month_oracle() {
    // Direct evaluation of pool → fc → relu → concat → fc → relu on a hand-sized unit.
    let cfg = ModelConfig { widths: vec![4, 8], ..ModelConfig::toy() };
    let params = random_params(&cfg, 14);
    let bound = params.bind::<f64>(false);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let a = TensorData::from_fn([5, 5, 3], |_| rng.gen_range(-1.0..1.0f64));
    let w1 = params.get("e1.csu.fc1.weight").unwrap().cast::<f64>();
    let b1 = params.get("e1.csu.fc1.bias").unwrap().cast::<f64>();
    let w2 = params.get("e1.csu.fc2.weight").unwrap().cast::<f64>();
    let b2 = params.get("e1.csu.fc2.bias").unwrap().cast::<f64>();
    assert_eq!(w2.shape(), &[2 + 12, 4]);

    let mean: Vec<f64> = (0..3).map(|c| a.data().iter().skip(c).step_by(3).sum::<f64>() / 25.0).collect();
    let oracle = |month: usize| -> Vec<f64> {
        let hidden: Vec<f64> = (0..2)
            .map(|j| (b1.data()[j] + (0..3).map(|i| mean[i] * w1.data()[i * 2 + j]).sum::<f64>()).max(0.0))
            .collect();
        let mut z = hidden;
        z.extend((0..12).map(|m| if m == month - 1 { 1.0 } else { 0.0 }));
        (0..4).map(|j| (b2.data()[j] + (0..14).map(|i| z[i] * w2.data()[i * 4 + j]).sum::<f64>()).max(0.0)).collect()
    };
    let a = Tensor::constant(a);
    for month in [6u8, 7] {
        let code = seasonal_one_hot(month, SeasonalMode::Month).unwrap();
        let got = csu_forward(&a, Some(&code), &bound, "e1").unwrap();
        for (g, o) in got.data().iter().zip(oracle(usize::from(month))) {
            assert!((g - o).abs() < 1e-12, "{g} vs {o}");
        }
    }
    assert_ne!(oracle(6), oracle(7), "random fc2 rows on the seasonal slots separate the months");
}

#[test]
fn csu_rejects_wrong_code_length() {
    let cfg = ModelConfig::toy();
    let bound = random_params(&cfg, 16).bind::<f32>(false);
    let season = seasonal_one_hot(1, SeasonalMode::Season).unwrap();
    let a = Tensor::constant(TensorData::<f32>::zeros([4, 4, 3]));
    assert!(matches!(csu_forward(&a, Some(&season), &bound, "e1"), Err(Error::InvalidShape(_))));
}

#[test]
fn decoder_rejects_mismatched_skip() {
    let cfg = ModelConfig::toy();
    let bound = random_params(&cfg, 17).bind::<f32>(false);
    let bottom = Tensor::constant(TensorData::<f32>::zeros([2, 2, 8]));
    let skip = Tensor::constant(TensorData::<f32>::zeros([5, 4, 8]));
    assert!(matches!(decoder_forward(&bottom, &skip, None, &bound, &cfg, 4), Err(Error::InvalidShape(_))));
}

#[test]
fn head_rejects_pe2d_with_odd_width() {
    let cfg = ModelConfig { widths: vec![6, 8], input_h: 8, input_w: 8, ..ModelConfig::toy() };
    let params = ParameterSet::new();
    let mut shapes_cfg = cfg.clone();
    shapes_cfg.location_mode = LocationMode::Off;
    let mut p = params;
    for (name, shape) in parameter_shapes(&shapes_cfg) {
        p.insert(name, TensorData::zeros(shape)).unwrap();
    }
    let a = Tensor::constant(TensorData::<f32>::zeros([8, 8, 6]));
    assert!(matches!(head_forward(&a, &p.bind(false), &cfg), Err(Error::InvalidArgument(_))));
}

#[test]
fn basenet_fused_is_detection() {
    let cfg = ModelConfig::toy().basenet();
    let out = forward(&cfg, &random_params(&cfg, 18), &random_image(&cfg, 19), 1);
    assert!(out.attention.is_none());
    assert_eq!(out.fused.data(), out.detection.data());
}

#[test]
fn coordconv_and_off_variants_run() {
    for mode in [LocationMode::CoordConv, LocationMode::Off] {
        let cfg = ModelConfig { location_mode: mode, ..ModelConfig::toy() };
        let out = forward(&cfg, &random_params(&cfg, 20), &random_image(&cfg, 21), 9);
        assert_eq!(out.attention.unwrap().shape(), &[4, 4, 12]);
    }
}

#[test]
fn rejects_bad_inputs() {
    let cfg = ModelConfig::toy();
    let bound = random_params(&cfg, 22).bind::<f32>(false);
    let image = Tensor::constant(random_image(&cfg, 23));
    assert!(model_forward(&image, 0, &bound, &cfg).is_err());
    let wrong = Tensor::constant(TensorData::<f32>::zeros([8, 8, 3]));
    assert!(model_forward(&wrong, 1, &bound, &cfg).is_err());
}
