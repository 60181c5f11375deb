//! Scalar types the network can run in: `f32` for training and inference,
//! `f64` for finite-difference gradient checks.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Real: Float + FromPrimitive + ToPrimitive + Default + Debug + Send + Sync + 'static {
    const NAME: &'static str;

    /// `C = alpha A B + beta C` with explicit row/column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    fn from_single(v: f32) -> Self;
    fn to_single(self) -> f32;

    /// Reinterprets a slice as `f32` when `Self` is `f32`.
    fn as_f32(s: &[Self]) -> Option<&[f32]>;
    fn as_f32_mut(s: &mut [Self]) -> Option<&mut [f32]>;
}

/// Bounds every strided access of a row/column-strided matrix.
fn span(rows: usize, cols: usize, rs: isize, cs: isize) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    assert!(rs >= 0 && cs >= 0, "negative strides are not supported");
    (rows - 1) * rs as usize + (cols - 1) * cs as usize + 1
}

macro_rules! impl_real {
    ($t:ty, $name:literal, $gemm:path, $f32:expr, $f32m:expr) => {
        impl Real for $t {
            const NAME: &'static str = $name;

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                assert!(a.len() >= span(m, k, rsa, csa));
                assert!(b.len() >= span(k, n, rsb, csb));
                assert!(c.len() >= span(m, n, rsc, csc));
                // SAFETY: the asserts above keep every strided access in bounds.
                unsafe {
                    $gemm(
                        m, k, n, alpha, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta,
                        c.as_mut_ptr(), rsc, csc,
                    )
                }
            }

            fn from_single(v: f32) -> Self {
                v as $t
            }

            fn to_single(self) -> f32 {
                self as f32
            }

            fn as_f32(s: &[Self]) -> Option<&[f32]> {
                $f32(s)
            }

            fn as_f32_mut(s: &mut [Self]) -> Option<&mut [f32]> {
                $f32m(s)
            }
        }
    };
}

impl_real!(f32, "f32", matrixmultiply::sgemm, Some, Some);
impl_real!(f64, "f64", matrixmultiply::dgemm, |_| None, |_| None);
