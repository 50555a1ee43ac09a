use std::time::{Duration, Instant};

use lsenet::model::{init_parameters, model_forward, parameter_shapes, ModelConfig};
use lsenet::tensor::{Tensor, TensorData};

#[test]
fn paper_scale_forward_shapes_and_time() {
    let cfg = ModelConfig::paper();
    let params = init_parameters(&cfg, 0).unwrap();
    let image = TensorData::from_fn([352, 352, 3], |i| (i % 97) as f32 / 97.0);
    let start = Instant::now();
    let out = model_forward(&Tensor::constant(image), 7, &params.bind::<f32>(false), &cfg).unwrap();
    let elapsed = start.elapsed();
    eprintln!("paper-scale forward: {elapsed:?}");
    assert_eq!(out.detection.shape(), &[352, 352, 12]);
    assert_eq!(out.attention.as_ref().unwrap().shape(), &[32, 32, 12]);
    assert_eq!(out.fused.shape(), &[352, 352, 12]);
    assert!(elapsed < Duration::from_secs(120));

    let shapes: std::collections::BTreeMap<_, _> = parameter_shapes(&cfg).into_iter().collect();
    assert_eq!(shapes["e1.csu.fc1.weight"], vec![3, 32]);
    assert_eq!(shapes["e1.csu.fc2.weight"], vec![32 + 12, 64]);
}
