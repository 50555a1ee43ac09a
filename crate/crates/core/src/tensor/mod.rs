//! Dense tensors with reverse-mode automatic differentiation.
//!
//! Feature maps use the height × width × channels layout, row-major. Every
//! operation lives in [`ops`] as a free function over [`Tensor`] handles; a
//! result only joins the autodiff graph when one of its inputs requires a
//! gradient, so inference over constant parameters retains no graph.

mod data;
pub mod gradcheck;
mod graph;
pub mod ops;
mod params;

pub use data::TensorData;
pub use graph::{GradFn, Tensor};
pub use params::{BoundParams, ParameterSet};

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::AddAssign;

use num_traits::Float;

/// Element type of a tensor. Models train in `f32`; gradient checks re-run
/// the same operations in `f64`.
pub trait Scalar:
    Float + Default + Debug + Display + Send + Sync + Sum + AddAssign + 'static
{
    fn of(v: f64) -> Self;

    fn as_f64(self) -> f64;

    /// `c ← alpha · a · b + beta · c` for an `m × k` by `k × n` product with
    /// arbitrary non-negative element strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_strides: (usize, usize),
        b: &[Self],
        b_strides: (usize, usize),
        beta: Self,
        c: &mut [Self],
        c_strides: (usize, usize),
    );
}

fn check_extent(len: usize, rows: usize, cols: usize, (rs, cs): (usize, usize), what: &str) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows - 1) * rs + (cols - 1) * cs;
    assert!(last < len, "gemm operand {what} too short: needs index {last}, has {len}");
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            #[inline]
            fn of(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm_raw(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                a_strides: (usize, usize),
                b: &[Self],
                b_strides: (usize, usize),
                beta: Self,
                c: &mut [Self],
                c_strides: (usize, usize),
            ) {
                check_extent(a.len(), m, k, a_strides, "a");
                check_extent(b.len(), k, n, b_strides, "b");
                check_extent(c.len(), m, n, c_strides, "c");
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: every index reachable through the strides was bounds-checked above.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        a_strides.0 as isize,
                        a_strides.1 as isize,
                        b.as_ptr(),
                        b_strides.0 as isize,
                        b_strides.1 as isize,
                        beta,
                        c.as_mut_ptr(),
                        c_strides.0 as isize,
                        c_strides.1 as isize,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);
