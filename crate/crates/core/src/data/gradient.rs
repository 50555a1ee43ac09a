use crate::error::{shape_err, Result};
use crate::tensor::TensorData;

/// Derivative of row-major `values` (`h×w`) along one axis: central
/// differences inside, one-sided differences on the two border lines.
fn axis_diff(values: &[f64], h: usize, w: usize, along_rows: bool) -> Vec<f64> {
    let at = |x: usize, y: usize| values[x * w + y];
    let n = if along_rows { h } else { w };
    let mut out = vec![0.0; h * w];
    if n < 2 {
        return out;
    }
    for x in 0..h {
        for y in 0..w {
            let i = if along_rows { x } else { y };
            let (lo, hi, span) = match i {
                0 => (0, 1, 1.0),
                _ if i == n - 1 => (n - 2, n - 1, 1.0),
                _ => (i - 1, i + 1, 2.0),
            };
            let (a, b) = if along_rows { (at(lo, y), at(hi, y)) } else { (at(x, lo), at(x, hi)) };
            out[x * w + y] = (b - a) / span;
        }
    }
    out
}

/// Gradient image of an `H×W` temperature field: channels `gx` (derivative
/// along rows), `gy` (along columns) and the magnitude `sqrt(gx² + gy²)`.
/// Values are raw, in field units per pixel.
pub fn sst_gradient(sst: &TensorData<f32>) -> Result<TensorData<f32>> {
    let &[h, w] = sst.shape() else {
        return Err(shape_err!("sst_gradient expects an H×W field, got {:?}", sst.shape()));
    };
    let values: Vec<f64> = sst.data().iter().map(|&v| f64::from(v)).collect();
    let gx = axis_diff(&values, h, w, true);
    let gy = axis_diff(&values, h, w, false);
    let mut out = Vec::with_capacity(h * w * 3);
    for (&a, &b) in gx.iter().zip(&gy) {
        out.extend([a as f32, b as f32, a.hypot(b) as f32]);
    }
    TensorData::new([h, w, 3], out)
}
