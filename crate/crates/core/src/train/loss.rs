use crate::error::{arg_err, shape_err, Result};
use crate::tensor::{GradFn, Scalar, Tensor, TensorData};

pub const PROB_FLOOR: f64 = 1e-7;

struct CrossEntropyBackward {
    labels: Vec<u8>,
    classes: usize,
}

impl<T: Scalar> GradFn<T> for CrossEntropyBackward {
    fn name(&self) -> &'static str {
        "cross_entropy"
    }

    fn backward(&self, g: &[T], _out: &TensorData<T>, parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let probs = parents[0].data();
        let scale = g[0] / T::of(self.labels.len() as f64);
        let mut dp = vec![T::zero(); probs.len()];
        for (px, &label) in self.labels.iter().enumerate() {
            let i = px * self.classes + usize::from(label);
            let p = probs[i];
            // the clamp is flat outside [floor, 1]
            if p >= T::of(PROB_FLOOR) && p <= T::one() {
                dp[i] = -scale / p;
            }
        }
        vec![Some(dp)]
    }
}

/// Mean over pixels of `−ln p[label]`, with `p` clamped to `[1e-7, 1]`.
pub fn cross_entropy<T: Scalar>(probs: &Tensor<T>, labels: &[u8]) -> Result<Tensor<T>> {
    let classes = *probs.shape().last().unwrap_or(&0);
    if classes == 0 || probs.numel() != labels.len() * classes {
        return Err(shape_err!(
            "cross_entropy: {} labels do not match probabilities of shape {:?}",
            labels.len(),
            probs.shape()
        ));
    }
    if labels.is_empty() {
        return Err(arg_err!("cross_entropy over zero pixels"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| usize::from(l) >= classes) {
        return Err(arg_err!("label {bad} out of range for {classes} classes"));
    }
    let (floor, one) = (T::of(PROB_FLOOR), T::one());
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(px, &l)| {
            let p = probs.data()[px * classes + usize::from(l)];
            -p.max(floor).min(one).as_f64().ln()
        })
        .sum();
    Ok(Tensor::from_op(
        TensorData::scalar(T::of(total / labels.len() as f64)),
        vec![probs.clone()],
        CrossEntropyBackward { labels: labels.to_vec(), classes },
    ))
}

struct SoftmaxCrossEntropyBackward {
    labels: Vec<u8>,
    classes: usize,
}

impl<T: Scalar> GradFn<T> for SoftmaxCrossEntropyBackward {
    fn name(&self) -> &'static str {
        "softmax_cross_entropy"
    }

    fn backward(&self, g: &[T], _out: &TensorData<T>, parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let scale = g[0].as_f64() / self.labels.len() as f64;
        let mut ds = Vec::with_capacity(parents[0].numel());
        for (px, &label) in parents[0].data().chunks_exact(self.classes).zip(&self.labels) {
            let (max, total) = log_sum_exp_parts(px);
            ds.extend(px.iter().enumerate().map(|(k, &v)| {
                let p = (v.as_f64() - max).exp() / total;
                T::of(scale * (p - f64::from(u8::from(k == usize::from(label)))))
            }));
        }
        vec![Some(ds)]
    }
}

fn log_sum_exp_parts<T: Scalar>(px: &[T]) -> (f64, f64) {
    let max = px.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    (max, px.iter().map(|v| (v.as_f64() - max).exp()).sum())
}

/// Mean over pixels of `−ln softmax(scores)[label]`, evaluated in log space.
///
/// Equivalent to [`cross_entropy`] on `softmax(scores)` wherever that
/// probability stays above the floor, but the gradient never vanishes: a
/// class pushed far below the floor still receives `p − 1`.
pub fn softmax_cross_entropy<T: Scalar>(scores: &Tensor<T>, labels: &[u8]) -> Result<Tensor<T>> {
    let classes = *scores.shape().last().unwrap_or(&0);
    if classes == 0 || scores.numel() != labels.len() * classes {
        return Err(shape_err!(
            "softmax_cross_entropy: {} labels do not match scores of shape {:?}",
            labels.len(),
            scores.shape()
        ));
    }
    if labels.is_empty() {
        return Err(arg_err!("softmax_cross_entropy over zero pixels"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| usize::from(l) >= classes) {
        return Err(arg_err!("label {bad} out of range for {classes} classes"));
    }
    let total: f64 = scores
        .data()
        .chunks_exact(classes)
        .zip(labels)
        .map(|(px, &l)| {
            let (max, sum) = log_sum_exp_parts(px);
            max + sum.ln() - px[usize::from(l)].as_f64()
        })
        .sum();
    Ok(Tensor::from_op(
        TensorData::scalar(T::of(total / labels.len() as f64)),
        vec![scores.clone()],
        SoftmaxCrossEntropyBackward { labels: labels.to_vec(), classes },
    ))
}
