use crate::error::{shape_err, Result};
use crate::tensor::{GradFn, Scalar, Tensor, TensorData};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Avg,
}

struct MaxPoolBackward {
    /// Flat input index that won each output element.
    argmax: Vec<usize>,
}

impl<T: Scalar> GradFn<T> for MaxPoolBackward {
    fn name(&self) -> &'static str {
        "max_pool2d"
    }

    fn backward(&self, g: &[T], _out: &TensorData<T>, parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let mut dx = vec![T::zero(); parents[0].numel()];
        for (&src, &gv) in self.argmax.iter().zip(g) {
            dx[src] += gv;
        }
        vec![Some(dx)]
    }
}

struct AvgPoolBackward {
    shape: [usize; 3],
    k: usize,
}

impl<T: Scalar> GradFn<T> for AvgPoolBackward {
    fn name(&self) -> &'static str {
        "avg_pool2d"
    }

    fn backward(&self, g: &[T], _out: &TensorData<T>, _parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let [h, w, c] = self.shape;
        let (ow, k) = (w / self.k, self.k);
        let scale = T::one() / T::of((k * k) as f64);
        let mut dx = vec![T::zero(); h * w * c];
        for y in 0..h {
            for x in 0..w {
                let src = ((y / k) * ow + x / k) * c;
                let dst = (y * w + x) * c;
                for ch in 0..c {
                    dx[dst + ch] = g[src + ch] * scale;
                }
            }
        }
        vec![Some(dx)]
    }
}

/// Non-overlapping `k×k` pooling. Max pooling routes the gradient to the first
/// maximal element of each window in row-major order.
pub fn pool2d<T: Scalar>(input: &Tensor<T>, kind: PoolKind, k: usize) -> Result<Tensor<T>> {
    let &[h, w, c] = input.shape() else {
        return Err(shape_err!("pool2d input must be H×W×C, got {:?}", input.shape()));
    };
    if k == 0 || h % k != 0 || w % k != 0 {
        return Err(shape_err!("pool2d window {k} does not divide {h}×{w}"));
    }
    let (oh, ow) = (h / k, w / k);
    let x = input.data();
    let mut out = vec![T::zero(); oh * ow * c];
    match kind {
        PoolKind::Max => {
            let mut argmax = vec![0usize; oh * ow * c];
            for oy in 0..oh {
                for ox in 0..ow {
                    let o = (oy * ow + ox) * c;
                    for ch in 0..c {
                        let mut best = (oy * k * w + ox * k) * c + ch;
                        for dy in 0..k {
                            for dx in 0..k {
                                let i = ((oy * k + dy) * w + ox * k + dx) * c + ch;
                                if x[i] > x[best] {
                                    best = i;
                                }
                            }
                        }
                        out[o + ch] = x[best];
                        argmax[o + ch] = best;
                    }
                }
            }
            let value = TensorData::new([oh, ow, c], out)?;
            Ok(Tensor::from_op(value, vec![input.clone()], MaxPoolBackward { argmax }))
        }
        PoolKind::Avg => {
            for y in 0..h {
                for xx in 0..w {
                    let src = (y * w + xx) * c;
                    let dst = ((y / k) * ow + xx / k) * c;
                    for ch in 0..c {
                        out[dst + ch] += x[src + ch];
                    }
                }
            }
            let scale = T::one() / T::of((k * k) as f64);
            out.iter_mut().for_each(|v| *v = *v * scale);
            let value = TensorData::new([oh, ow, c], out)?;
            Ok(Tensor::from_op(value, vec![input.clone()], AvgPoolBackward { shape: [h, w, c], k }))
        }
    }
}

struct GlobalAvgPoolBackward {
    pixels: usize,
}

impl<T: Scalar> GradFn<T> for GlobalAvgPoolBackward {
    fn name(&self) -> &'static str {
        "global_avg_pool"
    }

    fn backward(&self, g: &[T], _out: &TensorData<T>, _parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let scale = T::one() / T::of(self.pixels as f64);
        let px: Vec<T> = g.iter().map(|&v| v * scale).collect();
        let mut dx = Vec::with_capacity(self.pixels * g.len());
        for _ in 0..self.pixels {
            dx.extend_from_slice(&px);
        }
        vec![Some(dx)]
    }
}

/// Averages an `H×W×C` map over all pixels into a flat `[C]` vector.
pub fn global_avg_pool<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let &[h, w, c] = input.shape() else {
        return Err(shape_err!("global_avg_pool input must be H×W×C, got {:?}", input.shape()));
    };
    let pixels = h * w;
    if pixels == 0 {
        return Err(shape_err!("global_avg_pool over an empty map"));
    }
    let mut out = vec![T::zero(); c];
    for px in input.data().chunks_exact(c.max(1)) {
        out.iter_mut().zip(px).for_each(|(o, &v)| *o += v);
    }
    let scale = T::one() / T::of(pixels as f64);
    out.iter_mut().for_each(|v| *v = *v * scale);
    Ok(Tensor::from_op(
        TensorData::new([c], out)?,
        vec![input.clone()],
        GlobalAvgPoolBackward { pixels },
    ))
}
