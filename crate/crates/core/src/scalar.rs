//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! Tensors are generic over [`Scalar`] so the same kernels run in `f32` for
//! training and evaluation and in `f64` for finite-difference checks.
//! Reductions accumulate in `f64` regardless of the storage type;
//! convolutions run as matrix products in the storage type.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point storage type: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Gemm + Default + Debug + Display + Send + Sync + 'static
{
    /// Widen to the accumulator type.
    fn acc(self) -> f64;
    /// Narrow from the accumulator type.
    fn from_acc(v: f64) -> Self;
    /// Narrow to the on-disk `f32` representation.
    fn to_storage(self) -> f32 {
        self.acc() as f32
    }
    fn from_storage(v: f32) -> Self {
        Self::from_acc(v as f64)
    }
}

impl Scalar for f32 {
    #[inline(always)]
    fn acc(self) -> f64 {
        self as f64
    }
    #[inline(always)]
    fn from_acc(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    #[inline(always)]
    fn acc(self) -> f64 {
        self
    }
    #[inline(always)]
    fn from_acc(v: f64) -> Self {
        v
    }
}

/// Dense matrix product `C = alpha A B + beta C` on strided row-major views.
///
/// `A` is `m x k`, `B` is `k x n`, `C` is `m x n`; each operand is described
/// by its row and column strides so transposes cost nothing. Results are
/// deterministic for fixed shapes.
pub trait Gemm: Sized {
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: (&[Self], usize, usize),
        b: (&[Self], usize, usize),
        beta: Self,
        c: (&mut [Self], usize, usize),
    );
}

fn check_view(len: usize, rows: usize, cols: usize, rs: usize, cs: usize) {
    if rows > 0 && cols > 0 {
        let last = (rows - 1) * rs + (cols - 1) * cs;
        assert!(last < len, "matrix view {rows}x{cols} (strides {rs},{cs}) exceeds buffer of {len}");
    }
}

macro_rules! impl_gemm {
    ($t:ty, $f:path) => {
        impl Gemm for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: (&[Self], usize, usize),
                b: (&[Self], usize, usize),
                beta: Self,
                c: (&mut [Self], usize, usize),
            ) {
                check_view(a.0.len(), m, k, a.1, a.2);
                check_view(b.0.len(), k, n, b.1, b.2);
                check_view(c.0.len(), m, n, c.1, c.2);
                // SAFETY: every view was bounds-checked above and `c` is
                // borrowed mutably, so it cannot alias `a` or `b`.
                unsafe {
                    $f(
                        m,
                        k,
                        n,
                        alpha,
                        a.0.as_ptr(),
                        a.1 as isize,
                        a.2 as isize,
                        b.0.as_ptr(),
                        b.1 as isize,
                        b.2 as isize,
                        beta,
                        c.0.as_mut_ptr(),
                        c.1 as isize,
                        c.2 as isize,
                    )
                }
            }
        }
    };
}

impl_gemm!(f32, matrixmultiply::sgemm);
impl_gemm!(f64, matrixmultiply::dgemm);
