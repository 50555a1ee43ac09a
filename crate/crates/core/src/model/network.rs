use crate::encodings::{apply_location_encoding, seasonal_one_hot, CoordConvParams, LocationMode, SeasonalCode};
use crate::error::{arg_err, shape_err, Result};
use crate::tensor::ops::{self, Interpolation, Padding, PoolKind};
use crate::tensor::{BoundParams, Scalar, Tensor, TensorData};

use super::ModelConfig;

/// Everything the head produces for one image.
pub struct ModelOutput<T: Scalar = f32> {
    /// Detection scores before the softmax.
    pub logits: Tensor<T>,
    /// Per-pixel class probabilities `P`, `H×W×N`.
    pub detection: Tensor<T>,
    /// Attention weights `C2` on the coarse `H/r × W/r × N` grid; `None` when the branch is disabled.
    pub attention: Option<Tensor<T>>,
    /// `C2` bilinearly upsampled to `H×W×N`.
    pub attention_upsampled: Option<Tensor<T>>,
    /// `P ⊙ up(C2) + P`, or `P` itself without attention.
    pub fused: Tensor<T>,
}

impl<T: Scalar> ModelOutput<T> {
    pub fn num_classes(&self) -> usize {
        *self.fused.shape().last().unwrap()
    }

    /// Per-pixel argmax of the fused scores; ties go to the lower class.
    pub fn prediction(&self) -> Vec<u8> {
        argmax_channels(self.fused.data(), self.num_classes())
    }

    /// Fused scores divided by their per-pixel sum, the distribution the loss sees.
    pub fn loss_distribution(&self) -> Result<Tensor<T>> {
        if self.attention.is_some() {
            ops::normalize_channels(&self.fused)
        } else {
            Ok(self.detection.clone())
        }
    }

    /// Log-space scores whose channel softmax is [`Self::loss_distribution`]:
    /// `P⊙(1+W) / Σ P⊙(1+W) = softmax(z + ln(1+W))` for detection logits `z`.
    pub fn loss_scores(&self) -> Result<Tensor<T>> {
        match &self.attention_upsampled {
            Some(up) => ops::add(&self.logits, &ops::log1p(up)),
            None => Ok(self.logits.clone()),
        }
    }
}

pub fn argmax_channels<T: Scalar>(data: &[T], channels: usize) -> Vec<u8> {
    data.chunks_exact(channels)
        .map(|px| {
            let mut best = 0;
            for (k, &v) in px.iter().enumerate().skip(1) {
                if v > px[best] {
                    best = k;
                }
            }
            best as u8
        })
        .collect()
}

fn conv_block<T: Scalar>(x: &Tensor<T>, params: &BoundParams<T>, name: &str) -> Result<Tensor<T>> {
    let y = ops::conv2d(x, params.get(&format!("{name}.weight"))?, params.get(&format!("{name}.bias"))?, Padding::Same)?;
    Ok(ops::relu(&y))
}

fn dense<T: Scalar>(x: &Tensor<T>, params: &BoundParams<T>, name: &str) -> Result<Tensor<T>> {
    ops::fully_connected(x, params.get(&format!("{name}.weight"))?, params.get(&format!("{name}.bias"))?)
}

/// Channel supervision unit of the stage named `prefix`: global average pool,
/// fc + relu to `C/2`, append the seasonal code, fc + relu to `C`.
/// Returns the per-channel bias as a flat `[C]` vector.
pub fn csu_forward<T: Scalar>(
    a: &Tensor<T>,
    seasonal: Option<&SeasonalCode>,
    params: &BoundParams<T>,
    prefix: &str,
) -> Result<Tensor<T>> {
    let pooled = ops::global_avg_pool(a)?;
    let mut hidden = ops::relu(&dense(&pooled, params, &format!("{prefix}.csu.fc1"))?);
    if let Some(code) = seasonal {
        let onehot = TensorData::new([code.vector.len()], code.vector.iter().map(|&v| T::of(f64::from(v))).collect())?;
        hidden = ops::concat_channels(&hidden, &Tensor::constant(onehot))?;
    }
    Ok(ops::relu(&dense(&hidden, params, &format!("{prefix}.csu.fc2"))?))
}

fn double_conv_with_csu<T: Scalar>(
    a: &Tensor<T>,
    seasonal: Option<&SeasonalCode>,
    params: &BoundParams<T>,
    config: &ModelConfig,
    prefix: &str,
) -> Result<Tensor<T>> {
    let b1 = conv_block(a, params, &format!("{prefix}.conv1"))?;
    let b1 = conv_block(&b1, params, &format!("{prefix}.conv2"))?;
    if !config.csu_enabled {
        return Ok(b1);
    }
    let bias = csu_forward(a, seasonal, params, prefix)?;
    ops::broadcast_add_channels(&b1, &bias)
}

/// Encoder stage `stage` (1-based). Returns the pre-pool skip map and, for every
/// stage but the bottleneck, its 2×2 max-pooled version.
pub fn encoder_forward<T: Scalar>(
    a: &Tensor<T>,
    seasonal: Option<&SeasonalCode>,
    params: &BoundParams<T>,
    config: &ModelConfig,
    stage: usize,
) -> Result<(Tensor<T>, Option<Tensor<T>>)> {
    if !(1..=config.stages()).contains(&stage) {
        return Err(arg_err!("encoder stage {stage} outside 1..={}", config.stages()));
    }
    let skip = double_conv_with_csu(a, seasonal, params, config, &format!("e{stage}"))?;
    if stage == config.stages() {
        return Ok((skip, None));
    }
    let pooled = ops::pool2d(&skip, PoolKind::Max, 2)?;
    Ok((skip, Some(pooled)))
}

/// Decoder stage `stage`: nearest ×2 upsample of `bottom`, concatenate `skip`,
/// two conv blocks plus the CSU bias of the concatenated map.
pub fn decoder_forward<T: Scalar>(
    bottom: &Tensor<T>,
    skip: &Tensor<T>,
    seasonal: Option<&SeasonalCode>,
    params: &BoundParams<T>,
    config: &ModelConfig,
    stage: usize,
) -> Result<Tensor<T>> {
    if !(1..config.stages()).contains(&stage) {
        return Err(arg_err!("decoder stage {stage} outside 1..{}", config.stages()));
    }
    let (bs, ss) = (bottom.shape(), skip.shape());
    if bs.len() != 3 || ss.len() != 3 || ss[0] != 2 * bs[0] || ss[1] != 2 * bs[1] {
        return Err(shape_err!("decoder skip {ss:?} is not twice the spatial size of bottom {bs:?}"));
    }
    let up = ops::upsample(bottom, Interpolation::Nearest, 2)?;
    let cat = ops::concat_channels(&up, skip)?;
    double_conv_with_csu(&cat, seasonal, params, config, &format!("d{stage}"))
}

/// Detection branch plus, if enabled, the location-attention branch and fusion.
pub fn head_forward<T: Scalar>(a: &Tensor<T>, params: &BoundParams<T>, config: &ModelConfig) -> Result<ModelOutput<T>> {
    let logits = ops::conv2d(a, params.get("head.det.weight")?, params.get("head.det.bias")?, Padding::Same)?;
    let detection = ops::softmax_channels(&logits);
    if !config.attention_enabled {
        return Ok(ModelOutput { fused: detection.clone(), logits, detection, attention: None, attention_upsampled: None });
    }

    let r = config.attention_r;
    let &[h, w, c] = a.shape() else {
        return Err(shape_err!("head input must be H×W×C, got {:?}", a.shape()));
    };
    if r == 0 || h % r != 0 || w % r != 0 {
        return Err(shape_err!("head input {h}×{w} not divisible by attention_r = {r}"));
    }
    if config.location_mode == LocationMode::Pe2d && c % 4 != 0 {
        return Err(arg_err!("pe2d location encoding needs channels divisible by 4, got {c}"));
    }
    let c1 = ops::pool2d(a, PoolKind::Avg, r)?;
    let mut x = conv_block(&c1, params, "head.att.conv0")?;
    let coord = match config.location_mode {
        LocationMode::CoordConv => {
            Some(CoordConvParams { weight: params.get("head.att.coord.weight")?, bias: params.get("head.att.coord.bias")? })
        }
        _ => None,
    };
    x = apply_location_encoding(&x, config.location_mode, coord)?;
    for j in 1..=config.attention_blocks {
        x = conv_block(&x, params, &format!("head.att.block{j}"))?;
    }
    let scores = ops::conv2d(&x, params.get("head.att.out.weight")?, params.get("head.att.out.bias")?, Padding::Same)?;
    let attention = ops::sigmoid(&scores);
    let up = ops::upsample(&attention, Interpolation::Bilinear, r)?;
    let fused = ops::add(&ops::mul(&detection, &up)?, &detection)?;
    Ok(ModelOutput { logits, detection, attention: Some(attention), attention_upsampled: Some(up), fused })
}

/// Full network on one `H×W×C_in` image observed in `month`.
pub fn model_forward<T: Scalar>(
    image: &Tensor<T>,
    month: u8,
    params: &BoundParams<T>,
    config: &ModelConfig,
) -> Result<ModelOutput<T>> {
    let expected = [config.input_h, config.input_w, config.in_channels];
    if image.shape() != expected {
        return Err(shape_err!("image shape {:?} does not match the model input {expected:?}", image.shape()));
    }
    if !(1..=12).contains(&month) {
        return Err(arg_err!("month {month} outside 1..=12"));
    }
    let code = config.seasonal_mode.mode().map(|m| seasonal_one_hot(month, m)).transpose()?;
    let seasonal = code.as_ref();

    let n = config.stages();
    let mut skips = Vec::with_capacity(n - 1);
    let mut x = image.clone();
    for stage in 1..=n {
        let (skip, pooled) = encoder_forward(&x, seasonal, params, config, stage)?;
        match pooled {
            Some(p) => {
                skips.push(skip);
                x = p;
            }
            None => x = skip,
        }
    }
    for stage in (1..n).rev() {
        x = decoder_forward(&x, &skips[stage - 1], seasonal, params, config, stage)?;
    }
    head_forward(&x, params, config)
}
