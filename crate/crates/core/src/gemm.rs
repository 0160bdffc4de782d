//! Safe row-major wrappers around the strided GEMM kernels.

use crate::Scalar;

/// `c = a * b (+ c if accumulate)`, a: m x k, b: k x n, c: m x n.
pub(crate) fn nn<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], accumulate: bool) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: bounds asserted above for the row-major extents used.
    unsafe {
        T::gemm_raw(
            m, k, n, T::one(), a.as_ptr(), k as isize, 1, b.as_ptr(), n as isize, 1, beta,
            c.as_mut_ptr(), n as isize, 1,
        )
    }
}

/// `c = a * b^T (+ c)`, a: m x k, b: n x k, c: m x n.
pub(crate) fn nt<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], accumulate: bool) {
    assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: b is read as its transpose: element (p, j) lives at j * k + p.
    unsafe {
        T::gemm_raw(
            m, k, n, T::one(), a.as_ptr(), k as isize, 1, b.as_ptr(), 1, k as isize, beta,
            c.as_mut_ptr(), n as isize, 1,
        )
    }
}

/// `c = a^T * b (+ c)`, a: k x m, b: k x n, c: m x n.
pub(crate) fn tn<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], accumulate: bool) {
    assert!(a.len() >= k * m && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: a is read as its transpose: element (i, p) lives at p * m + i.
    unsafe {
        T::gemm_raw(
            m, k, n, T::one(), a.as_ptr(), 1, m as isize, b.as_ptr(), n as isize, 1, beta,
            c.as_mut_ptr(), n as isize, 1,
        )
    }
}
