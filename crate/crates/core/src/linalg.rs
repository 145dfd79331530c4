//! Small dense linear-algebra helpers shared by the filter and smoothers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

/// Replaces `p` by `(p + p') / 2`.
pub fn symmetrize(p: &mut DMatrix<f64>) {
    let t = p.transpose();
    *p += t;
    *p *= 0.5;
}

/// Whether `p + shift * I` is positive definite, by attempting a blocked
/// Cholesky factorization of its lower triangle. Only the lower triangle of
/// `p` is read.
pub fn is_positive_definite(p: &DMatrix<f64>, shift: f64) -> bool {
    const BLOCK: usize = 64;
    let n = p.nrows();
    let mut a = p.clone();
    for k in 0..n {
        a[(k, k)] += shift;
    }
    let mut k = 0;
    while k < n {
        let b = BLOCK.min(n - k);
        // Unblocked factorization of the diagonal block.
        for j in k..k + b {
            let mut d = a[(j, j)];
            for c in k..j {
                d -= a[(j, c)] * a[(j, c)];
            }
            if !(d > 0.0 && d.is_finite()) {
                return false;
            }
            let d = d.sqrt();
            a[(j, j)] = d;
            for i in j + 1..k + b {
                let mut v = a[(i, j)];
                for c in k..j {
                    v -= a[(i, c)] * a[(j, c)];
                }
                a[(i, j)] = v / d;
            }
        }
        let rest = n - k - b;
        if rest == 0 {
            break;
        }
        // Panel: L21 = A21 L11^{-T}, through the small triangular inverse so
        // the work stays in gemm.
        let l11 = a.view((k, k), (b, b)).lower_triangle();
        let Some(inv) = l11.solve_lower_triangular(&DMatrix::identity(b, b)) else {
            return false;
        };
        let l21 = a.view((k + b, k), (rest, b)) * inv.transpose();
        a.view_mut((k + b, k), (rest, b)).copy_from(&l21);
        // Trailing update of the lower triangle, one column block at a time.
        let mut c = 0;
        while c < rest {
            let w = BLOCK.min(rest - c);
            let below = l21.rows(c, rest - c);
            let cols = l21.rows(c, w);
            a.view_mut((k + b + c, k + b + c), (rest - c, w))
                .gemm(-1.0, &below, &cols.transpose(), 1.0);
            c += w;
        }
        k += b;
    }
    true
}

/// Outcome of [`repair_psd`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Repair {
    None,
    /// A diagonal shift of this size was added.
    Shifted(f64),
}

/// Symmetrizes `p` and, if its smallest eigenvalue is below `-1e-8 * trace`,
/// shifts the diagonal so that the smallest eigenvalue becomes zero.
///
/// The eigenvalue test is done with a Cholesky factorization of
/// `p + 1e-8 * trace * I`, which succeeds exactly when the test passes; the
/// eigendecomposition only runs when a repair is needed.
pub fn repair_psd(p: &mut DMatrix<f64>) -> Repair {
    symmetrize(p);
    let n = p.nrows();
    if n == 0 {
        return Repair::None;
    }
    let tol = 1e-8 * p.trace().abs();
    if tol > 0.0 && is_positive_definite(p, tol) {
        return Repair::None;
    }
    let min_eig = SymmetricEigen::new(p.clone()).eigenvalues.min();
    if min_eig >= -tol {
        return Repair::None;
    }
    let shift = -min_eig;
    for k in 0..n {
        p[(k, k)] += shift;
    }
    Repair::Shifted(shift)
}

/// Symmetric PSD square root after flooring eigenvalues at zero.
pub fn sym_sqrt(p: &DMatrix<f64>) -> DMatrix<f64> {
    let n = p.nrows();
    if n == 0 {
        return p.clone();
    }
    let mut sym = p.clone();
    symmetrize(&mut sym);
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let mut scaled = eig.eigenvectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= roots[j];
    }
    scaled * eig.eigenvectors.transpose()
}

/// Cholesky factorization, retrying with growing diagonal jitter. Returns the
/// factor and the jitter that was needed (zero if none).
pub fn cholesky_jittered(p: &DMatrix<f64>) -> Option<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(p.clone()) {
        return Some((c, 0.0));
    }
    let n = p.nrows();
    let scale = (p.trace().abs() / n.max(1) as f64).max(f64::MIN_POSITIVE);
    let mut jitter = 1e-12 * scale;
    for _ in 0..8 {
        let mut q = p.clone();
        for k in 0..n {
            q[(k, k)] += jitter;
        }
        if let Some(c) = Cholesky::new(q) {
            return Some((c, jitter));
        }
        jitter *= 100.0;
    }
    None
}

/// `log det` from a Cholesky factor.
pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum()
}

/// Gaussian log-density of `y ~ N(0, S)` given the Cholesky factor of `S`.
pub fn gaussian_log_density(y: &DVector<f64>, chol: &Cholesky<f64, Dyn>) -> f64 {
    let m = y.len() as f64;
    let z = chol.solve(y);
    -0.5 * (m * (2.0 * std::f64::consts::PI).ln() + log_det(chol) + y.dot(&z))
}
