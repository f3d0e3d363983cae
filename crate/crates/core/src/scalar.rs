//! Floating point abstraction used by the learning stack.
//!
//! Networks, optimizers, and the categorical projection are written once
//! against [`Scalar`] and instantiated for `f32` (training) and `f64`
//! (gradient checks).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// f32 or f64
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// General matrix multiply `C = alpha * A B + beta * C` with explicit
    /// row/column strides, `A` is `m x k`, `B` is `k x n`, `C` is `m x n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: usize,
        csa: usize,
        b: &[Self],
        rsb: usize,
        csb: usize,
        beta: Self,
        c: &mut [Self],
        rsc: usize,
        csc: usize,
    );

    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

fn extent(rows: usize, cols: usize, rs: usize, cs: usize) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs + (cols - 1) * cs + 1
    }
}

#[allow(clippy::too_many_arguments)]
fn check_gemm_bounds(
    m: usize,
    k: usize,
    n: usize,
    a: usize,
    rsa: usize,
    csa: usize,
    b: usize,
    rsb: usize,
    csb: usize,
    c: usize,
    rsc: usize,
    csc: usize,
) {
    assert!(extent(m, k, rsa, csa) <= a, "gemm: A out of bounds");
    assert!(extent(k, n, rsb, csb) <= b, "gemm: B out of bounds");
    assert!(extent(m, n, rsc, csc) <= c, "gemm: C out of bounds");
}

macro_rules! impl_scalar {
    ($t:ty, $kernel:path) => {
        impl Scalar for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: usize,
                csa: usize,
                b: &[Self],
                rsb: usize,
                csb: usize,
                beta: Self,
                c: &mut [Self],
                rsc: usize,
                csc: usize,
            ) {
                check_gemm_bounds(
                    m,
                    k,
                    n,
                    a.len(),
                    rsa,
                    csa,
                    b.len(),
                    rsb,
                    csb,
                    c.len(),
                    rsc,
                    csc,
                );
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: every index touched by the kernel lies inside the
                // extents checked above.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa as isize,
                        csa as isize,
                        b.as_ptr(),
                        rsb as isize,
                        csb as isize,
                        beta,
                        c.as_mut_ptr(),
                        rsc as isize,
                        csc as isize,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

/// `out (rows x n_out) += x (rows x n_in) * w^T` where `w` is stored
/// row-major as `n_out x n_in`.
pub(crate) fn matmul_xwt<T: Scalar>(
    x: &[T],
    w: &[T],
    out: &mut [T],
    rows: usize,
    n_in: usize,
    n_out: usize,
) {
    T::gemm(
        rows,
        n_in,
        n_out,
        T::one(),
        x,
        n_in,
        1,
        w,
        1,
        n_in,
        T::one(),
        out,
        n_out,
        1,
    );
}

/// `dx (rows x n_in) += dy (rows x n_out) * w (n_out x n_in)`.
pub(crate) fn matmul_dy_w<T: Scalar>(
    dy: &[T],
    w: &[T],
    dx: &mut [T],
    rows: usize,
    n_in: usize,
    n_out: usize,
) {
    T::gemm(
        rows,
        n_out,
        n_in,
        T::one(),
        dy,
        n_out,
        1,
        w,
        n_in,
        1,
        T::one(),
        dx,
        n_in,
        1,
    );
}

/// `dw (n_out x n_in) += dy^T (n_out x rows) * x (rows x n_in)`.
pub(crate) fn matmul_dyt_x<T: Scalar>(
    dy: &[T],
    x: &[T],
    dw: &mut [T],
    rows: usize,
    n_in: usize,
    n_out: usize,
) {
    T::gemm(
        n_out,
        rows,
        n_in,
        T::one(),
        dy,
        1,
        n_out,
        x,
        n_in,
        1,
        T::one(),
        dw,
        n_in,
        1,
    );
}
