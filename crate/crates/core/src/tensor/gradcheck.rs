//! Central finite-difference checking of analytic gradients.

use crate::error::Result;

use super::{Scalar, Tensor, TensorData};

/// Relative disagreement between an analytic and a numeric derivative,
/// `|a − c| / max(|a|, |c|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Worst relative error over every element of `x` between the gradient of
/// the scalar function `f` from [`Tensor::backward`] and central differences
/// with the given step.
pub fn finite_difference_check<T, F>(f: F, x: &TensorData<T>, step: T) -> Result<f64>
where
    T: Scalar,
    F: Fn(&Tensor<T>) -> Result<Tensor<T>>,
{
    finite_difference_check_at(f, x, step, 0..x.numel())
}

/// As [`finite_difference_check`], restricted to the listed element indices.
pub fn finite_difference_check_at<T, F>(
    f: F,
    x: &TensorData<T>,
    step: T,
    indices: impl IntoIterator<Item = usize>,
) -> Result<f64>
where
    T: Scalar,
    F: Fn(&Tensor<T>) -> Result<Tensor<T>>,
{
    let leaf = Tensor::leaf(x.clone());
    let loss = f(&leaf)?;
    let analytic = if loss.requires_grad() {
        loss.backward()?;
        leaf.grad().unwrap_or_else(|| TensorData::zeros(x.shape().to_vec()))
    } else {
        TensorData::zeros(x.shape().to_vec())
    };

    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for i in indices {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let up = f(&Tensor::constant(probe.clone()))?.item()?;
        probe.data_mut()[i] = orig - step;
        let down = f(&Tensor::constant(probe.clone()))?.item()?;
        probe.data_mut()[i] = orig;
        let numeric = (up.as_f64() - down.as_f64()) / (2.0 * step.as_f64());
        worst = worst.max(relative_error(analytic.data()[i].as_f64(), numeric));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::ops;

    #[test]
    fn sum_of_squares() {
        let x = TensorData::new([2], vec![1.0f64, 2.0]).unwrap();
        let err = finite_difference_check(|t| Ok(ops::sum(&ops::mul(t, t)?)), &x, 1e-3).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn linear_function_is_exact() {
        let x = TensorData::new([3], vec![0.3f64, -1.2, 2.5]).unwrap();
        let coeffs = Tensor::constant(TensorData::new([3], vec![2.0f64, -1.0, 0.5]).unwrap());
        let err = finite_difference_check(|t| Ok(ops::sum(&ops::mul(t, &coeffs)?)), &x, 1e-3).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn detects_wrong_gradient() {
        // max(x, 0) checked against a function whose analytic gradient ignores relu
        let x = TensorData::new([2], vec![-1.0f64, 1.0]).unwrap();
        let err = finite_difference_check(
            |t| {
                let y = ops::relu(t);
                if t.requires_grad() {
                    Ok(ops::sum(t))
                } else {
                    Ok(ops::sum(&y))
                }
            },
            &x,
            1e-3,
        )
        .unwrap();
        assert!(err > 0.5);
    }
}
