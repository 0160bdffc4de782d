use core::fmt::Debug;

use num_traits::Float;

/// Floating-point element type of tensors and network parameters.
///
/// `f32` is the storage and inference type; `f64` exists so gradient checks
/// can run with little rounding noise, and the optional quad type serves
/// as a finite-difference reference.
pub trait Scalar: Float + Debug + Send + Sync + 'static {
    /// Accumulator for long reductions: at least as wide as `f64`.
    type Acc: Scalar;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn widen(self) -> Self::Acc;
    fn narrow(acc: Self::Acc) -> Self;

    /// `c <- alpha * a * b + beta * c` over strided row/column views.
    ///
    /// # Safety
    /// Every index reachable through the given extents and strides must lie
    /// inside the corresponding buffer.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Scalar for f32 {
    type Acc = f64;
    #[inline]
    fn widen(self) -> f64 {
        self as f64
    }
    #[inline]
    fn narrow(acc: f64) -> Self {
        acc as f32
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    type Acc = f64;
    #[inline]
    fn widen(self) -> f64 {
        self
    }
    #[inline]
    fn narrow(acc: f64) -> Self {
        acc
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

#[cfg(feature = "quad")]
mod quad {
    use super::Scalar;
    use f128::f128;
    use num_traits::{ToPrimitive, Zero};

    /// Only used as a finite-difference reference, so the GEMM is a plain
    /// triple loop.
    impl Scalar for f128 {
        type Acc = f128;
        #[inline]
        fn from_f64(v: f64) -> Self {
            f128::from(v)
        }
        #[inline]
        fn as_f64(self) -> f64 {
            self.to_f64().unwrap_or(f64::NAN)
        }
        #[inline]
        fn widen(self) -> Self {
            self
        }
        #[inline]
        fn narrow(acc: Self) -> Self {
            acc
        }
        unsafe fn gemm_raw(
            m: usize,
            k: usize,
            n: usize,
            alpha: Self,
            a: *const Self,
            rsa: isize,
            csa: isize,
            b: *const Self,
            rsb: isize,
            csb: isize,
            beta: Self,
            c: *mut Self,
            rsc: isize,
            csc: isize,
        ) {
            for i in 0..m as isize {
                for j in 0..n as isize {
                    let mut acc = f128::zero();
                    for p in 0..k as isize {
                        acc += *a.offset(i * rsa + p * csa) * *b.offset(p * rsb + j * csb);
                    }
                    let out = c.offset(i * rsc + j * csc);
                    *out = if beta.is_zero() { alpha * acc } else { alpha * acc + beta * *out };
                }
            }
        }
    }
}
