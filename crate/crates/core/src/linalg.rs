//! Dense symmetric eigensolver backed by LAPACK.

use nalgebra::{DMatrix, DVector};

/// Eigenvalues in ascending order and the matching orthonormal eigenvectors
/// (as columns) of a real symmetric matrix. Only the lower triangle is read.
pub fn symmetric_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let mut z = a.clone();
    let mut w = vec![0.0; n];
    let nn = n as i32;
    let mut info = 0;
    let mut lwork_q = 0.0;
    let mut liwork_q = 0;
    // SAFETY: buffers are sized per the LAPACK contract; the first call is a
    // workspace query that writes only `lwork_q` and `liwork_q`.
    unsafe {
        lapack_sys::dsyevd_(
            &(b'V' as _),
            &(b'L' as _),
            &nn,
            z.as_mut_ptr(),
            &nn,
            w.as_mut_ptr(),
            &mut lwork_q,
            &-1,
            &mut liwork_q,
            &-1,
            &mut info,
        );
    }
    assert_eq!(info, 0, "dsyevd workspace query failed");
    let lwork = lwork_q as i32;
    let liwork = liwork_q;
    let mut work = vec![0.0; lwork.max(1) as usize];
    let mut iwork = vec![0; liwork.max(1) as usize];
    // SAFETY: as above, with workspaces of the queried sizes.
    unsafe {
        lapack_sys::dsyevd_(
            &(b'V' as _),
            &(b'L' as _),
            &nn,
            z.as_mut_ptr(),
            &nn,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    assert_eq!(info, 0, "dsyevd failed to converge");
    (DVector::from_vec(w), z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reconstructs_a_symmetric_matrix() {
        let a = DMatrix::from_fn(7, 7, |i, j| 1.0 / (1.0 + i as f64 + j as f64) + if i == j { i as f64 } else { 0.0 });
        let (w, v) = symmetric_eigen(&a);
        assert!(w.as_slice().windows(2).all(|p| p[0] <= p[1]));
        let back = &v * DMatrix::from_diagonal(&w) * v.transpose();
        assert!((back - &a).amax() < 1e-12);
        assert!((v.transpose() * &v - DMatrix::identity(7, 7)).amax() < 1e-12);
    }
}
