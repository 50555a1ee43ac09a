use crate::tensor::{GradFn, Scalar, Tensor, TensorData};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    /// Softmax over the trailing axis, independently at every pixel.
    SoftmaxChannels,
}

pub fn activation<T: Scalar>(input: &Tensor<T>, kind: Activation) -> Tensor<T> {
    match kind {
        Activation::Relu => relu(input),
        Activation::Sigmoid => sigmoid(input),
        Activation::SoftmaxChannels => softmax_channels(input),
    }
}

struct ReluBackward;

impl<T: Scalar> GradFn<T> for ReluBackward {
    fn name(&self) -> &'static str {
        "relu"
    }

    fn backward(&self, g: &[T], _out: &TensorData<T>, parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let dx = parents[0]
            .data()
            .iter()
            .zip(g)
            .map(|(&x, &gv)| if x > T::zero() { gv } else { T::zero() })
            .collect();
        vec![Some(dx)]
    }
}

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let out = input.data().iter().map(|&x| x.max(T::zero())).collect();
    let value = TensorData::new(input.shape().to_vec(), out).expect("same shape");
    Tensor::from_op(value, vec![input.clone()], ReluBackward)
}

struct SigmoidBackward;

impl<T: Scalar> GradFn<T> for SigmoidBackward {
    fn name(&self) -> &'static str {
        "sigmoid"
    }

    fn backward(&self, g: &[T], out: &TensorData<T>, _parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let dx = out.data().iter().zip(g).map(|(&s, &gv)| gv * s * (T::one() - s)).collect();
        vec![Some(dx)]
    }
}

fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let out = input.data().iter().map(|&x| sigmoid_scalar(x)).collect();
    let value = TensorData::new(input.shape().to_vec(), out).expect("same shape");
    Tensor::from_op(value, vec![input.clone()], SigmoidBackward)
}

struct Log1pBackward;

impl<T: Scalar> GradFn<T> for Log1pBackward {
    fn name(&self) -> &'static str {
        "log1p"
    }

    fn backward(&self, g: &[T], _out: &TensorData<T>, parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let dx = parents[0].data().iter().zip(g).map(|(&x, &gv)| gv / (T::one() + x)).collect();
        vec![Some(dx)]
    }
}

/// Elementwise `ln(1 + x)`, for `x > −1`.
pub fn log1p<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let out = input.data().iter().map(|&x| x.ln_1p()).collect();
    let value = TensorData::new(input.shape().to_vec(), out).expect("same shape");
    Tensor::from_op(value, vec![input.clone()], Log1pBackward)
}

struct SoftmaxBackward {
    channels: usize,
}

impl<T: Scalar> GradFn<T> for SoftmaxBackward {
    fn name(&self) -> &'static str {
        "softmax_channels"
    }

    fn backward(&self, g: &[T], out: &TensorData<T>, _parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let mut dx = Vec::with_capacity(g.len());
        for (y, gp) in out.data().chunks_exact(self.channels).zip(g.chunks_exact(self.channels)) {
            let dot: T = y.iter().zip(gp).map(|(&a, &b)| a * b).sum();
            dx.extend(y.iter().zip(gp).map(|(&a, &b)| a * (b - dot)));
        }
        vec![Some(dx)]
    }
}

pub fn softmax_channels<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let channels = input.shape().last().copied().unwrap_or(1).max(1);
    let mut out = Vec::with_capacity(input.numel());
    for px in input.data().chunks_exact(channels) {
        let max = px.iter().copied().fold(T::neg_infinity(), T::max);
        let start = out.len();
        out.extend(px.iter().map(|&v| (v - max).exp()));
        let total: T = out[start..].iter().copied().sum();
        out[start..].iter_mut().for_each(|v| *v = *v / total);
    }
    let value = TensorData::new(input.shape().to_vec(), out).expect("same shape");
    Tensor::from_op(value, vec![input.clone()], SoftmaxBackward { channels })
}
