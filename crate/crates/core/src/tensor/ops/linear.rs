use crate::error::{shape_err, Result};
use crate::tensor::{GradFn, Scalar, Tensor, TensorData};

struct FullyConnectedBackward {
    din: usize,
    dout: usize,
}

impl<T: Scalar> GradFn<T> for FullyConnectedBackward {
    fn name(&self) -> &'static str {
        "fully_connected"
    }

    fn backward(&self, g: &[T], _out: &TensorData<T>, parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let (x, w, b) = (&parents[0], &parents[1], &parents[2]);
        let (din, dout) = (self.din, self.dout);
        let dx = x.requires_grad().then(|| {
            let mut dx = vec![T::zero(); din];
            T::gemm_raw(din, dout, 1, T::one(), w.data(), (dout, 1), g, (1, 1), T::zero(), &mut dx, (1, 1));
            dx
        });
        let dw = w.requires_grad().then(|| {
            let mut dw = vec![T::zero(); din * dout];
            T::gemm_raw(din, 1, dout, T::one(), x.data(), (1, 1), g, (1, 1), T::zero(), &mut dw, (dout, 1));
            dw
        });
        let db = b.requires_grad().then(|| g.to_vec());
        vec![dx, dw, db]
    }
}

/// Affine map of a flat `[Din]` vector: `x · W + b` with `W` stored `Din×Dout`.
pub fn fully_connected<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let &[din] = input.shape() else {
        return Err(shape_err!("fully_connected input must be a flat vector, got {:?}", input.shape()));
    };
    let &[wdin, dout] = weight.shape() else {
        return Err(shape_err!("fully_connected weight must be Din×Dout, got {:?}", weight.shape()));
    };
    if wdin != din {
        return Err(shape_err!("fully_connected weight expects {wdin} inputs, got {din}"));
    }
    if bias.shape() != [dout] {
        return Err(shape_err!("fully_connected bias must be [{dout}], got {:?}", bias.shape()));
    }
    let mut out = bias.data().to_vec();
    T::gemm_raw(1, din, dout, T::one(), input.data(), (din, 1), weight.data(), (dout, 1), T::one(), &mut out, (dout, 1));
    Ok(Tensor::from_op(
        TensorData::new([dout], out)?,
        vec![input.clone(), weight.clone(), bias.clone()],
        FullyConnectedBackward { din, dout },
    ))
}
