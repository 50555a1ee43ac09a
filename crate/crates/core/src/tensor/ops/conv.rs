use crate::error::{shape_err, Result};
use crate::tensor::{GradFn, Scalar, Tensor, TensorData};

/// Spatial padding for [`conv2d`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Zero-pad symmetrically so the output keeps the input extent (odd kernels only).
    Same,
    /// No padding; the output shrinks by `k - 1`.
    Valid,
}

/// Upper bound on im2col buffer elements per band of output rows.
const BAND_ELEMS: usize = 1 << 21;

#[derive(Clone, Copy, Debug)]
struct Geometry {
    h: usize,
    w: usize,
    cin: usize,
    k: usize,
    cout: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn patch_len(&self) -> usize {
        self.k * self.k * self.cin
    }

    fn band_rows(&self) -> usize {
        (BAND_ELEMS / (self.ow * self.patch_len()).max(1)).clamp(1, self.oh.max(1))
    }

    /// Fills `patch` with the receptive fields of output rows `r0..r1`, one row
    /// per output pixel, columns ordered (ky, kx, ci) to match the weight layout.
    fn im2col<T: Scalar>(&self, input: &[T], r0: usize, r1: usize, patch: &mut Vec<T>) {
        let kl = self.patch_len();
        patch.clear();
        patch.resize((r1 - r0) * self.ow * kl, T::zero());
        for r in r0..r1 {
            for c in 0..self.ow {
                let row = &mut patch[((r - r0) * self.ow + c) * kl..][..kl];
                for ky in 0..self.k {
                    let Some(iy) = (r + ky).checked_sub(self.pad).filter(|&y| y < self.h) else {
                        continue;
                    };
                    for kx in 0..self.k {
                        let Some(ix) = (c + kx).checked_sub(self.pad).filter(|&x| x < self.w)
                        else {
                            continue;
                        };
                        let src = (iy * self.w + ix) * self.cin;
                        let dst = (ky * self.k + kx) * self.cin;
                        row[dst..dst + self.cin].copy_from_slice(&input[src..src + self.cin]);
                    }
                }
            }
        }
    }

    /// Scatter-adds patch gradients back onto the input gradient.
    fn col2im<T: Scalar>(&self, dpatch: &[T], r0: usize, r1: usize, dinput: &mut [T]) {
        let kl = self.patch_len();
        for r in r0..r1 {
            for c in 0..self.ow {
                let row = &dpatch[((r - r0) * self.ow + c) * kl..][..kl];
                for ky in 0..self.k {
                    let Some(iy) = (r + ky).checked_sub(self.pad).filter(|&y| y < self.h) else {
                        continue;
                    };
                    for kx in 0..self.k {
                        let Some(ix) = (c + kx).checked_sub(self.pad).filter(|&x| x < self.w)
                        else {
                            continue;
                        };
                        let dst = (iy * self.w + ix) * self.cin;
                        let src = (ky * self.k + kx) * self.cin;
                        for (d, &s) in dinput[dst..dst + self.cin].iter_mut().zip(&row[src..src + self.cin]) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }

    fn bands(&self) -> impl Iterator<Item = (usize, usize)> {
        let step = self.band_rows();
        let oh = self.oh;
        (0..oh).step_by(step).map(move |r0| (r0, (r0 + step).min(oh)))
    }
}

struct Conv2dBackward {
    geo: Geometry,
}

impl<T: Scalar> GradFn<T> for Conv2dBackward {
    fn name(&self) -> &'static str {
        "conv2d"
    }

    fn backward(&self, g: &[T], _out: &TensorData<T>, parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let geo = self.geo;
        let (input, weight, bias) = (&parents[0], &parents[1], &parents[2]);
        let kl = geo.patch_len();
        let cout = geo.cout;

        let dbias = bias.requires_grad().then(|| {
            let mut db = vec![T::zero(); cout];
            for px in g.chunks_exact(cout) {
                db.iter_mut().zip(px).for_each(|(d, &v)| *d += v);
            }
            db
        });

        let mut dweight = weight.requires_grad().then(|| vec![T::zero(); kl * cout]);
        let mut dinput = input.requires_grad().then(|| vec![T::zero(); input.numel()]);
        let mut patch = Vec::new();
        let mut dpatch = Vec::new();
        for (r0, r1) in geo.bands() {
            let m = (r1 - r0) * geo.ow;
            let g_band = &g[r0 * geo.ow * cout..r1 * geo.ow * cout];
            if let Some(dw) = dweight.as_mut() {
                geo.im2col(input.data(), r0, r1, &mut patch);
                // dW (kl × cout) += patchᵀ · g
                T::gemm_raw(kl, m, cout, T::one(), &patch, (1, kl), g_band, (cout, 1), T::one(), dw, (cout, 1));
            }
            if let Some(dx) = dinput.as_mut() {
                dpatch.clear();
                dpatch.resize(m * kl, T::zero());
                // dpatch (m × kl) = g · Wᵀ
                T::gemm_raw(m, cout, kl, T::one(), g_band, (cout, 1), weight.data(), (1, cout), T::zero(), &mut dpatch, (kl, 1));
                geo.col2im(&dpatch, r0, r1, dx);
            }
        }
        vec![dinput, dweight, dbias]
    }
}

/// 2-D cross-correlation of an `H×W×Cin` map with a `k×k×Cin×Cout` kernel plus bias.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    padding: Padding,
) -> Result<Tensor<T>> {
    let &[h, w, cin] = input.shape() else {
        return Err(shape_err!("conv2d input must be H×W×C, got {:?}", input.shape()));
    };
    let &[k, k2, wcin, cout] = weight.shape() else {
        return Err(shape_err!("conv2d weight must be k×k×Cin×Cout, got {:?}", weight.shape()));
    };
    if k != k2 || k == 0 {
        return Err(shape_err!("conv2d kernel must be square, got {k}×{k2}"));
    }
    if wcin != cin {
        return Err(shape_err!("conv2d weight expects {wcin} input channels, input has {cin}"));
    }
    if bias.shape() != [cout] {
        return Err(shape_err!("conv2d bias must be [{cout}], got {:?}", bias.shape()));
    }
    let (pad, oh, ow) = match padding {
        Padding::Same => {
            if k % 2 == 0 {
                return Err(shape_err!("same padding needs an odd kernel, got {k}"));
            }
            (k / 2, h, w)
        }
        Padding::Valid => {
            if h < k || w < k {
                return Err(shape_err!("input {h}×{w} smaller than kernel {k}"));
            }
            (0, h - k + 1, w - k + 1)
        }
    };
    let geo = Geometry { h, w, cin, k, cout, pad, oh, ow };
    let kl = geo.patch_len();

    let mut out: Vec<T> = Vec::with_capacity(oh * ow * cout);
    for _ in 0..oh * ow {
        out.extend_from_slice(bias.data());
    }
    let mut patch = Vec::new();
    for (r0, r1) in geo.bands() {
        geo.im2col(input.data(), r0, r1, &mut patch);
        let m = (r1 - r0) * ow;
        let c_band = &mut out[r0 * ow * cout..r1 * ow * cout];
        T::gemm_raw(m, kl, cout, T::one(), &patch, (kl, 1), weight.data(), (cout, 1), T::one(), c_band, (cout, 1));
    }
    let value = TensorData::new([oh, ow, cout], out)?;
    Ok(Tensor::from_op(
        value,
        vec![input.clone(), weight.clone(), bias.clone()],
        Conv2dBackward { geo },
    ))
}
