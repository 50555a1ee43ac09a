use crate::error::{shape_err, Result};
use crate::tensor::{GradFn, Scalar, Tensor, TensorData};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interpolation {
    Nearest,
    Bilinear,
}

/// Source taps along one axis for bilinear resampling (align-corners = false).
#[derive(Clone, Copy, Debug)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f64,
}

fn taps(n: usize, factor: usize) -> Vec<Tap> {
    (0..n * factor)
        .map(|o| {
            let src = ((o as f64 + 0.5) / factor as f64 - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(n - 1);
            let hi = (lo + 1).min(n - 1);
            Tap { lo, hi, frac: src - lo as f64 }
        })
        .collect()
}

struct NearestBackward {
    shape: [usize; 3],
    factor: usize,
}

impl<T: Scalar> GradFn<T> for NearestBackward {
    fn name(&self) -> &'static str {
        "upsample_nearest"
    }

    fn backward(&self, g: &[T], _out: &TensorData<T>, _parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let [h, w, c] = self.shape;
        let f = self.factor;
        let ow = w * f;
        let mut dx = vec![T::zero(); h * w * c];
        for oy in 0..h * f {
            for ox in 0..ow {
                let src = (oy * ow + ox) * c;
                let dst = ((oy / f) * w + ox / f) * c;
                for ch in 0..c {
                    dx[dst + ch] += g[src + ch];
                }
            }
        }
        vec![Some(dx)]
    }
}

struct BilinearBackward {
    shape: [usize; 3],
    rows: Vec<Tap>,
    cols: Vec<Tap>,
}

impl<T: Scalar> GradFn<T> for BilinearBackward {
    fn name(&self) -> &'static str {
        "upsample_bilinear"
    }

    fn backward(&self, g: &[T], _out: &TensorData<T>, _parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let [_, w, c] = self.shape;
        let ow = self.cols.len();
        let mut dx = vec![T::zero(); self.shape.iter().product()];
        for (oy, ty) in self.rows.iter().enumerate() {
            let fy = T::of(ty.frac);
            for (ox, tx) in self.cols.iter().enumerate() {
                let fx = T::of(tx.frac);
                let w00 = (T::one() - fy) * (T::one() - fx);
                let w01 = (T::one() - fy) * fx;
                let w10 = fy * (T::one() - fx);
                let w11 = fy * fx;
                let src = (oy * ow + ox) * c;
                let i00 = (ty.lo * w + tx.lo) * c;
                let i01 = (ty.lo * w + tx.hi) * c;
                let i10 = (ty.hi * w + tx.lo) * c;
                let i11 = (ty.hi * w + tx.hi) * c;
                for ch in 0..c {
                    let gv = g[src + ch];
                    dx[i00 + ch] += gv * w00;
                    dx[i01 + ch] += gv * w01;
                    dx[i10 + ch] += gv * w10;
                    dx[i11 + ch] += gv * w11;
                }
            }
        }
        vec![Some(dx)]
    }
}

/// Enlarges an `h×w×C` map by an integer factor.
///
/// Bilinear sampling places output pixel `i` at source coordinate
/// `(i + 0.5) / factor - 0.5`, clamped at the low edge and replicated at the
/// high edge.
pub fn upsample<T: Scalar>(input: &Tensor<T>, kind: Interpolation, factor: usize) -> Result<Tensor<T>> {
    let &[h, w, c] = input.shape() else {
        return Err(shape_err!("upsample input must be H×W×C, got {:?}", input.shape()));
    };
    if factor == 0 {
        return Err(shape_err!("upsample factor must be positive"));
    }
    if h == 0 || w == 0 {
        return Err(shape_err!("upsample of an empty map"));
    }
    let (oh, ow) = (h * factor, w * factor);
    let x = input.data();
    let mut out = Vec::with_capacity(oh * ow * c);
    match kind {
        Interpolation::Nearest => {
            for oy in 0..oh {
                for ox in 0..ow {
                    let src = ((oy / factor) * w + ox / factor) * c;
                    out.extend_from_slice(&x[src..src + c]);
                }
            }
            let value = TensorData::new([oh, ow, c], out)?;
            Ok(Tensor::from_op(value, vec![input.clone()], NearestBackward { shape: [h, w, c], factor }))
        }
        Interpolation::Bilinear => {
            let rows = taps(h, factor);
            let cols = taps(w, factor);
            for ty in &rows {
                let fy = T::of(ty.frac);
                for tx in &cols {
                    let fx = T::of(tx.frac);
                    let (i00, i01) = ((ty.lo * w + tx.lo) * c, (ty.lo * w + tx.hi) * c);
                    let (i10, i11) = ((ty.hi * w + tx.lo) * c, (ty.hi * w + tx.hi) * c);
                    for ch in 0..c {
                        // lerp form keeps constant inputs exactly constant
                        let top = x[i00 + ch] + fx * (x[i01 + ch] - x[i00 + ch]);
                        let bottom = x[i10 + ch] + fx * (x[i11 + ch] - x[i10 + ch]);
                        out.push(top + fy * (bottom - top));
                    }
                }
            }
            let value = TensorData::new([oh, ow, c], out)?;
            Ok(Tensor::from_op(value, vec![input.clone()], BilinearBackward { shape: [h, w, c], rows, cols }))
        }
    }
}
