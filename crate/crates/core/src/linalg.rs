//! Dense linear-algebra helpers shared by the metric and posterior code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative tolerance for rank decisions, applied to the largest singular value.
pub(crate) const RANK_TOL: f64 = 1e-10;

/// Numerical rank via singular values: count of σ_i > RANK_TOL · σ_max.
pub(crate) fn rank(a: &DMatrix<f64>) -> usize {
    let sv = a.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * max).count()
}

/// Cholesky factorization with an error carrying the failing context.
pub(crate) fn cholesky(a: DMatrix<f64>, context: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(a).ok_or_else(|| Error::Factorization(context.to_string()))
}

/// log det A from its Cholesky factor: 2 Σ ln L_ii.
pub(crate) fn cholesky_log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|d| d.ln())
        .sum::<f64>()
}

/// Full Householder QR of an n×m matrix with m ≤ n.
///
/// Returns (Q, R) with Q n×n orthogonal and R n×m upper triangular. The last
/// n−m columns of Q span the orthogonal complement of the column space of the
/// input whenever the input has full column rank.
pub(crate) fn full_qr(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m) = a.shape();
    let mut r = a.clone();
    let mut q = DMatrix::<f64>::identity(n, n);

    for j in 0..m.min(n) {
        let len = n - j;
        let mut v = DVector::<f64>::zeros(len);
        for i in 0..len {
            v[i] = r[(j + i, j)];
        }
        let norm = v.norm();
        if norm == 0.0 {
            continue;
        }
        let alpha = -v[0].signum() * norm;
        v[0] -= alpha;
        let vnorm = v.norm();
        if vnorm < f64::MIN_POSITIVE {
            continue;
        }
        v /= vnorm;

        // r ← H r and q ← q H with H = I − 2vvᵀ embedded at offset j.
        for col in j..m {
            let mut dot = 0.0;
            for i in 0..len {
                dot += v[i] * r[(j + i, col)];
            }
            let s = 2.0 * dot;
            for i in 0..len {
                r[(j + i, col)] -= s * v[i];
            }
        }
        for row in 0..n {
            let mut dot = 0.0;
            for i in 0..len {
                dot += q[(row, j + i)] * v[i];
            }
            let s = 2.0 * dot;
            for i in 0..len {
                q[(row, j + i)] -= s * v[i];
            }
        }
    }
    (q, r)
}

/// In-place symmetrization: a ← (a + aᵀ)/2.
pub(crate) fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = avg;
            a[(j, i)] = avg;
        }
    }
}
