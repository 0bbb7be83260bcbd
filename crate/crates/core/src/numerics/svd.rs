//! Singular values via one-sided Jacobi.
//!
//! The worker operates on the transpose, so every Givens rotation touches two
//! contiguous rows. Rotations preserve the Frobenius norm, which is what the
//! `sum sigma_i^2 = ||M||_F^2` test checks.

use crate::error::Result;
use crate::matrix::Matrix;

/// Relative off-diagonal tolerance for declaring two columns orthogonal.
const JACOBI_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;

/// Singular values of `m`, sorted descending. Returns `min(rows, cols)`
/// values.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    m.validate_finite()?;
    // Orthogonalizing the shorter side is cheaper and the values agree.
    let work = if m.cols() > m.rows() {
        m.clone()
    } else {
        m.transpose()
    };
    let (mut values, _) = jacobi(work, false);
    values.truncate(m.rows().min(m.cols()));
    Ok(values)
}

/// Singular values plus right singular vectors of `m`, both sorted by
/// descending value. Row `i` of the returned matrix is the unit right
/// singular vector for value `i`; there are `min(rows, cols)` of each.
pub fn svd_right_vectors(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    m.validate_finite()?;
    let (mut values, vectors) = jacobi(m.transpose(), true);
    let keep = m.rows().min(m.cols());
    values.truncate(keep);
    let vectors = vectors.expect("vectors requested");
    let rows: Vec<usize> = (0..keep).collect();
    Ok((values, vectors.select_rows(&rows)))
}

/// One-sided Jacobi on `t` whose ROWS are the columns of the original
/// matrix. Returns singular values sorted descending and, when requested,
/// the accumulated rotations (row `j` = right singular vector `j`).
fn jacobi(mut t: Matrix, want_vectors: bool) -> (Vec<f64>, Option<Matrix>) {
    let c = t.rows();
    let mut acc = want_vectors.then(|| Matrix::identity(c));

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..c {
            for q in (p + 1)..c {
                let (alpha, beta, gamma) = column_moments(&t, p, q);
                if gamma == 0.0 || alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let tan = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cos = 1.0 / (1.0 + tan * tan).sqrt();
                let sin = cos * tan;
                rotate_rows(&mut t, p, q, cos, sin);
                if let Some(acc) = acc.as_mut() {
                    rotate_rows(acc, p, q, cos, sin);
                }
                rotated = true;
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..c).collect();
    let norms: Vec<f64> = (0..c)
        .map(|i| t.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap().then(a.cmp(&b)));

    let values: Vec<f64> = order.iter().map(|&i| norms[i]).collect();
    let vectors = acc.map(|m| m.select_rows(&order));
    (values, vectors)
}

fn column_moments(t: &Matrix, p: usize, q: usize) -> (f64, f64, f64) {
    let rp = t.row(p);
    let rq = t.row(q);
    let mut alpha = 0.0;
    let mut beta = 0.0;
    let mut gamma = 0.0;
    for (&a, &b) in rp.iter().zip(rq) {
        alpha += a * a;
        beta += b * b;
        gamma += a * b;
    }
    (alpha, beta, gamma)
}

fn rotate_rows(m: &mut Matrix, p: usize, q: usize, cos: f64, sin: f64) {
    let cols = m.cols();
    let (lo, hi) = (p.min(q), p.max(q));
    let data = m.data_mut();
    let (head, tail) = data.split_at_mut(hi * cols);
    let row_lo = &mut head[lo * cols..(lo + 1) * cols];
    let row_hi = &mut tail[..cols];
    let (rp, rq) = if lo == p { (row_lo, row_hi) } else { (row_hi, row_lo) };
    for (a, b) in rp.iter_mut().zip(rq.iter_mut()) {
        let x = *a;
        let y = *b;
        *a = cos * x - sin * y;
        *b = sin * x + cos * y;
    }
}
