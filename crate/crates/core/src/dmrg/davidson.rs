//! Iterative eigensolvers for the superblock: restarted Lanczos for the
//! ground state and Davidson with a diagonal preconditioner for the lowest
//! few eigenpairs.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub matvecs: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct DavidsonParams {
    pub tol: f64,
    pub max_iter: usize,
    pub max_subspace: usize,
    /// Problems up to this dimension are diagonalized densely.
    pub dense_below: usize,
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Deterministic filler vectors used when start guesses are missing or
/// linearly dependent.
fn filler(dim: usize, k: usize) -> Vec<f64> {
    let mut state = 0x9e37_79b9_7f4a_7c15u64 ^ (k as u64).wrapping_mul(0x2545_f491_4f6c_dd1d);
    (0..dim)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

fn dense_solve(
    apply: &mut dyn FnMut(&[f64], &mut [f64]),
    dim: usize,
    k: usize,
) -> Eigenpairs {
    let mut h = DMatrix::zeros(dim, dim);
    let mut e = vec![0.0; dim];
    let mut col = vec![0.0; dim];
    for c in 0..dim {
        e[c] = 1.0;
        apply(&e, &mut col);
        e[c] = 0.0;
        h.set_column(c, &nalgebra::DVector::from_column_slice(&col));
    }
    let h = (&h + h.transpose()) * 0.5;
    let (values, vectors) = crate::linalg::symmetric_eigen(&h);
    let k = k.min(dim);
    Eigenpairs {
        values: values.iter().take(k).copied().collect(),
        vectors: (0..k).map(|i| vectors.column(i).iter().copied().collect()).collect(),
        residuals: vec![0.0; k],
        matvecs: dim,
        converged: true,
    }
}

/// Orthonormal basis and its images, stored as matrix columns.
struct Subspace {
    v: DMatrix<f64>,
    av: DMatrix<f64>,
    n: usize,
}

impl Subspace {
    fn new(dim: usize, cap: usize) -> Self {
        Self {
            v: DMatrix::zeros(dim, cap),
            av: DMatrix::zeros(dim, cap),
            n: 0,
        }
    }

    /// Orthogonalizes `w` against the stored columns (classical Gram-Schmidt,
    /// repeated once if the first pass cancelled most of the norm) and
    /// normalizes it. Returns `None` when nothing independent is left.
    fn orthonormalize(&self, w: &mut DVector<f64>) -> bool {
        let start = w.norm();
        if start == 0.0 || !start.is_finite() {
            return false;
        }
        let mut before = start;
        let mut n = start;
        if self.n > 0 {
            let basis = self.v.columns(0, self.n);
            for _ in 0..2 {
                let c = basis.tr_mul(w);
                w.gemv(-1.0, &basis, &c, 1.0);
                n = w.norm();
                if n > 0.5 * before {
                    break;
                }
                before = n;
            }
        }
        if n < 1e-10 * start {
            return false;
        }
        *w /= n;
        true
    }

    fn push(&mut self, v: &DVector<f64>, apply: &mut dyn FnMut(&[f64], &mut [f64])) {
        let n = self.n;
        self.v.set_column(n, v);
        let (src, dst) = (self.v.column(n), &mut self.av);
        apply(src.as_slice(), dst.column_mut(n).as_mut_slice());
        self.n += 1;
    }

    /// Columns of `V y` and `AV y` for the coefficient matrix `y` (`n × k`).
    fn combine(&self, y: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let v = self.v.columns(0, self.n) * y;
        let av = self.av.columns(0, self.n) * y;
        (v, av)
    }
}

/// Lowest `k` eigenpairs of the operator `apply` with diagonal `diag`,
/// starting from the given guesses.
///
/// The projected matrix is extended one row per new basis vector; when the
/// subspace is full it is collapsed onto its lowest Ritz vectors.
pub fn davidson(
    apply: &mut dyn FnMut(&[f64], &mut [f64]),
    diag: &[f64],
    starts: Vec<Vec<f64>>,
    k: usize,
    params: DavidsonParams,
) -> Eigenpairs {
    let dim = diag.len();
    if dim <= params.dense_below.max(k) {
        return dense_solve(apply, dim, k);
    }
    let max_sub = params.max_subspace.max(2 * k + 2).min(dim);
    let keep = (max_sub / 3).max(k + 1).min(max_sub - k);
    let mut space = Subspace::new(dim, max_sub + k);
    let mut t = DMatrix::<f64>::zeros(0, 0);
    let mut matvecs = 0;
    let candidates = starts.into_iter().chain((0..k + 2).map(|i| filler(dim, i)));
    let mut initial = 0;
    for s in candidates {
        if initial >= k {
            break;
        }
        let mut w = DVector::from_vec(s);
        if space.orthonormalize(&mut w) {
            space.push(&w, apply);
            matvecs += 1;
            initial += 1;
        }
    }
    let mut added_from = 0;
    let mut iter = 0;
    loop {
        let n = space.n;
        if n > t.nrows() {
            let mut grown = DMatrix::zeros(n, n);
            let old = t.nrows();
            grown.view_mut((0, 0), (old, old)).copy_from(&t);
            let cross = space.v.columns(0, n).tr_mul(&space.av.columns(added_from, n - added_from));
            for (jj, j) in (added_from..n).enumerate() {
                for i in 0..n {
                    let x = cross[(i, jj)];
                    if i >= added_from && i > j {
                        continue;
                    }
                    grown[(i, j)] = x;
                    grown[(j, i)] = x;
                }
            }
            t = grown;
        }
        let eig = t.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let kk = k.min(n);
        let mut y = DMatrix::zeros(n, kk);
        for (c, &col) in order[..kk].iter().enumerate() {
            y.set_column(c, &eig.eigenvectors.column(col));
        }
        let values: Vec<f64> = order[..kk].iter().map(|&c| eig.eigenvalues[c]).collect();
        let (x, ax) = space.combine(&y);
        let mut r = ax;
        for c in 0..kk {
            let mut rc = r.column_mut(c);
            rc.axpy(-values[c], &x.column(c), 1.0);
        }
        let residuals: Vec<f64> = (0..kk).map(|c| r.column(c).norm()).collect();
        let converged = residuals.iter().all(|&v| v <= params.tol);
        log::trace!("davidson iter {iter} n {n} theta {:.12} residual {:.3e}", values[0], residuals[0]);
        if converged || iter >= params.max_iter {
            return Eigenpairs {
                values,
                vectors: (0..kk).map(|c| x.column(c).iter().copied().collect()).collect(),
                residuals,
                matvecs,
                converged,
            };
        }
        iter += 1;
        if n + kk > max_sub {
            let mut yk = DMatrix::zeros(n, keep.min(n));
            for (c, &col) in order[..keep.min(n)].iter().enumerate() {
                yk.set_column(c, &eig.eigenvectors.column(col));
            }
            let (v, av) = space.combine(&yk);
            let m = v.ncols();
            space.v.columns_mut(0, m).copy_from(&v);
            space.av.columns_mut(0, m).copy_from(&av);
            space.n = m;
            t = DMatrix::from_diagonal(&DVector::from_iterator(
                m,
                order[..m].iter().map(|&c| eig.eigenvalues[c]),
            ));
        }
        added_from = space.n;
        for c in 0..kk {
            if residuals[c] <= params.tol {
                continue;
            }
            let theta = values[c];
            let inv = DVector::from_iterator(
                dim,
                diag.iter().map(|&di| {
                    let mut den = theta - di;
                    if den.abs() < 1e-8 {
                        den = if den < 0.0 { -1e-8 } else { 1e-8 };
                    }
                    1.0 / den
                }),
            );
            let (xc, rc) = (x.column(c), r.column(c));
            // Olsen correction keeps the update from collapsing onto the Ritz vector
            let num = xc.component_mul(&inv).dot(&rc);
            let den = xc.component_mul(&inv).dot(&xc);
            let eps = if den.abs() > 1e-300 { num / den } else { 0.0 };
            let mut w = (&rc - &xc * eps).component_mul(&inv);
            if !space.orthonormalize(&mut w) {
                w = rc.into_owned();
                if !space.orthonormalize(&mut w) {
                    continue;
                }
            }
            space.push(&w, apply);
            matvecs += 1;
        }
        if space.n == added_from {
            return Eigenpairs {
                values,
                vectors: (0..kk).map(|c| x.column(c).iter().copied().collect()).collect(),
                residuals,
                matvecs,
                converged: false,
            };
        }
    }
}

/// Lowest eigenpair by restarted Lanczos without reorthogonalization.
///
/// The Krylov vectors of one cycle are kept to form the Ritz vector. A cycle
/// ends when the recurrence estimate of the residual drops below `tol` or the
/// basis reaches `max_subspace`; the true residual is then checked with one
/// more product and the next cycle starts from the Ritz vector.
pub fn lanczos(
    apply: &mut dyn FnMut(&[f64], &mut [f64]),
    dim: usize,
    start: Option<Vec<f64>>,
    params: DavidsonParams,
) -> Eigenpairs {
    if dim <= params.dense_below.max(1) {
        return dense_solve(apply, dim, 1);
    }
    let cap = params.max_subspace.max(4).min(dim);
    let mut x = start.unwrap_or_else(|| filler(dim, 0));
    if !(x.iter().any(|&v| v != 0.0) && x.iter().all(|v| v.is_finite())) {
        x = filler(dim, 0);
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cap);
    let mut w = vec![0.0; dim];
    let mut matvecs = 0;
    let mut last = (0.0, f64::INFINITY);
    loop {
        let nx = norm(&x);
        x.iter_mut().for_each(|v| *v /= nx);
        basis.clear();
        basis.push(std::mem::take(&mut x));
        let mut alpha: Vec<f64> = Vec::with_capacity(cap);
        let mut beta: Vec<f64> = Vec::with_capacity(cap);
        let mut y;
        loop {
            let j = basis.len() - 1;
            apply(&basis[j], &mut w);
            matvecs += 1;
            let a = dot(&basis[j], &w);
            axpy(-a, &basis[j], &mut w);
            if j > 0 {
                axpy(-beta[j - 1], &basis[j - 1], &mut w);
            }
            // one local correction against the latest vector
            let c = dot(&basis[j], &w);
            axpy(-c, &basis[j], &mut w);
            alpha.push(a + c);
            let b = norm(&w);
            beta.push(b);
            let t = DMatrix::from_fn(j + 1, j + 1, |r, q| {
                if r == q {
                    alpha[r]
                } else if r + 1 == q {
                    beta[r]
                } else if q + 1 == r {
                    beta[q]
                } else {
                    0.0
                }
            });
            let eig = t.symmetric_eigen();
            let lowest = (0..=j)
                .min_by(|&p, &q| eig.eigenvalues[p].total_cmp(&eig.eigenvalues[q]))
                .expect("nonempty");
            y = eig.eigenvectors.column(lowest).into_owned();
            let estimate = (b * y[j]).abs();
            if estimate <= 0.5 * params.tol || b < 1e-14 || j + 1 == cap || matvecs >= params.max_iter {
                break;
            }
            let next: Vec<f64> = w.iter().map(|v| v / b).collect();
            basis.push(next);
        }
        x = vec![0.0; dim];
        for (c, v) in y.iter().zip(&basis) {
            axpy(*c, v, &mut x);
        }
        let nx = norm(&x);
        x.iter_mut().for_each(|v| *v /= nx);
        apply(&x, &mut w);
        matvecs += 1;
        let theta = dot(&x, &w);
        axpy(-theta, &x, &mut w);
        let residual = norm(&w);
        log::trace!("lanczos cycle of {}: theta {theta:.12} residual {residual:.3e}", basis.len());
        let stalled = residual >= 0.9 * last.1 && (theta - last.0).abs() < 1e-14 * theta.abs().max(1.0);
        last = (theta, residual);
        if residual <= params.tol || matvecs >= params.max_iter || stalled {
            return Eigenpairs {
                values: vec![theta],
                vectors: vec![x],
                residuals: vec![residual],
                matvecs,
                converged: residual <= params.tol,
            };
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> impl FnMut(&[f64], &mut [f64]) {
        move |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let mut v = 2.0 * x[i] + 0.01 * i as f64 * x[i];
                if i > 0 {
                    v -= x[i - 1];
                }
                if i + 1 < n {
                    v -= x[i + 1];
                }
                y[i] = v;
            }
        }
    }

    #[test]
    fn matches_dense_on_a_tridiagonal_matrix() {
        let n = 300;
        let diag: Vec<f64> = (0..n).map(|i| 2.0 + 0.01 * i as f64).collect();
        let params = DavidsonParams {
            tol: 1e-10,
            max_iter: 2000,
            max_subspace: 40,
            dense_below: 0,
        };
        let mut op = laplacian(n);
        let got = davidson(&mut op, &diag, vec![], 2, params);
        assert!(got.converged, "{:?}", got.residuals);
        let mut op = laplacian(n);
        let exact = dense_solve(&mut op, n, 2);
        for (a, b) in got.values.iter().zip(&exact.values) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert!(got.values[0] <= got.values[1]);
    }

    #[test]
    fn lanczos_matches_dense_on_a_tridiagonal_matrix() {
        let n = 300;
        let params = DavidsonParams {
            tol: 1e-10,
            max_iter: 5000,
            max_subspace: 40,
            dense_below: 0,
        };
        let mut op = laplacian(n);
        let got = lanczos(&mut op, n, None, params);
        assert!(got.converged, "{:?}", got.residuals);
        let mut op = laplacian(n);
        let exact = dense_solve(&mut op, n, 1);
        assert!((got.values[0] - exact.values[0]).abs() < 1e-12);
    }
}
