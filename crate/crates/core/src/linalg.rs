//! Thin safe wrappers over the LAPACK/BLAS routines used by the crate.
//! All matrices are dense, column-major.

use crate::error::{Error, Result};

/// Symmetric eigendecomposition by divide and conquer (`dsyevd`).
///
/// On success `a` holds the orthonormal eigenvectors column by column when
/// `vectors` is set; its contents are unspecified otherwise. Eigenvalues are
/// returned in ascending order.
pub fn symmetric_eigen(a: &mut [f64], n: usize, vectors: bool) -> Result<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    if n == 0 {
        return Ok(Vec::new());
    }
    let ni = i32::try_from(n).map_err(|_| Error::DimensionTooLarge { dimension: n, limit: i32::MAX as usize })?;
    let jobz = if vectors { b'V' } else { b'N' };
    let mut w = vec![0.0; n];
    let mut info = 0;
    let mut work = vec![0.0; 1];
    let mut iwork = vec![0i32; 1];
    unsafe {
        lapack::dsyevd(jobz, b'U', ni, a, ni, &mut w, &mut work, -1, &mut iwork, -1, &mut info);
    }
    if info != 0 {
        return Err(Error::Convergence(info));
    }
    let lwork = work[0] as usize;
    let liwork = iwork[0] as usize;
    let mut work = vec![0.0; lwork.max(1)];
    let mut iwork = vec![0i32; liwork.max(1)];
    unsafe {
        lapack::dsyevd(
            jobz,
            b'U',
            ni,
            a,
            ni,
            &mut w,
            &mut work,
            lwork as i32,
            &mut iwork,
            liwork as i32,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Convergence(info));
    }
    Ok(w)
}

/// `c = a * b` with `a` m x k, `b` k x n, `c` m x n.
pub fn matmul(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    unsafe {
        blas::dgemm(
            b'N', b'N', m as i32, n as i32, k as i32, 1.0, a, m as i32, b, k as i32, 0.0, c, m as i32,
        );
    }
}

/// `y = a^T x` with `a` m x n.
pub fn matvec_transposed(a: &[f64], x: &[f64], m: usize, n: usize) -> Vec<f64> {
    assert_eq!(a.len(), m * n);
    assert_eq!(x.len(), m);
    let mut y = vec![0.0; n];
    if m == 0 || n == 0 {
        return y;
    }
    unsafe {
        blas::dgemv(b'T', m as i32, n as i32, 1.0, a, m as i32, x, 1, 0.0, &mut y, 1);
    }
    y
}
