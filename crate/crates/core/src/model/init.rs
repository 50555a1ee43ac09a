use rand::Rng;

use crate::encodings::LocationMode;
use crate::error::Result;
use crate::seed;
use crate::tensor::{ParameterSet, TensorData};

use super::ModelConfig;

/// Shape of every parameter the configuration needs, in construction order.
pub fn parameter_shapes(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    struct Shapes(Vec<(String, Vec<usize>)>);
    impl Shapes {
        fn layer(&mut self, name: &str, weight: Vec<usize>) {
            let cout = *weight.last().unwrap();
            self.0.push((format!("{name}.weight"), weight));
            self.0.push((format!("{name}.bias"), vec![cout]));
        }
        fn stage(&mut self, config: &ModelConfig, prefix: &str, cin: usize, c: usize) {
            self.layer(&format!("{prefix}.conv1"), vec![3, 3, cin, c]);
            self.layer(&format!("{prefix}.conv2"), vec![3, 3, c, c]);
            if config.csu_enabled {
                let seasonal = config.seasonal_mode.code_len();
                self.layer(&format!("{prefix}.csu.fc1"), vec![cin, c / 2]);
                self.layer(&format!("{prefix}.csu.fc2"), vec![c / 2 + seasonal, c]);
            }
        }
    }

    let mut s = Shapes(Vec::new());
    let widths = &config.widths;
    let n = widths.len();
    for i in 0..n {
        let cin = if i == 0 { config.in_channels } else { widths[i - 1] };
        s.stage(config, &format!("e{}", i + 1), cin, widths[i]);
    }
    for i in (0..n.saturating_sub(1)).rev() {
        s.stage(config, &format!("d{}", i + 1), widths[i + 1] + widths[i], widths[i]);
    }

    let c = widths[0];
    let classes = config.num_classes;
    s.layer("head.det", vec![1, 1, c, classes]);
    if config.attention_enabled {
        s.layer("head.att.conv0", vec![3, 3, c, c]);
        if config.location_mode == LocationMode::CoordConv {
            s.layer("head.att.coord", vec![1, 1, c + 2, c]);
        }
        for j in 1..=config.attention_blocks {
            s.layer(&format!("head.att.block{j}"), vec![3, 3, c, c]);
        }
        s.layer("head.att.out", vec![1, 1, c, classes]);
    }
    s.0
}

/// He-uniform weights (`±sqrt(6 / fan_in)`) and zero biases. Each tensor
/// draws from its own stream keyed by (seed, name).
pub fn init_parameters(config: &ModelConfig, seed: u64) -> Result<ParameterSet> {
    config.validate()?;
    let mut params = ParameterSet::new();
    for (name, shape) in parameter_shapes(config) {
        let value = if name.ends_with(".bias") {
            TensorData::zeros(shape)
        } else {
            let fan_in: usize = shape[..shape.len() - 1].iter().product();
            let bound = (6.0 / fan_in as f64).sqrt() as f32;
            let mut rng = seed::rng(&[seed, seed::hash_str(&name)]);
            TensorData::from_fn(shape, |_| rng.gen_range(-bound..=bound))
        };
        params.insert(name, value)?;
    }
    Ok(params)
}
