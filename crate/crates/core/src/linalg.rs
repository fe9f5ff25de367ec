//! Thin SVD by one-sided Jacobi rotations.

use nalgebra::{DMatrix, DVector};

/// Thin factorization `a = u diag(singular_values) v_t` with singular values
/// in decreasing order. Columns of `u` paired with a zero singular value are
/// zero.
pub(crate) struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

const MAX_SWEEPS: usize = 80;

/// The bidiagonal SVD in nalgebra can return singular vectors that do not
/// reproduce rank-deficient blocks, so the group factorizations use this.
pub(crate) fn jacobi_svd(a: &DMatrix<f64>) -> Svd {
    if a.nrows() < a.ncols() {
        let t = jacobi_svd(&a.transpose());
        return Svd {
            u: t.v_t.transpose(),
            singular_values: t.singular_values,
            v_t: t.u.transpose(),
        };
    }
    let (n, k) = a.shape();
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(k, k);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..k {
            for q in p + 1..k {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..k).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let mut u = DMatrix::zeros(n, k);
    let mut v_t = DMatrix::zeros(k, k);
    let mut sv = DVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        sv[dst] = norms[src];
        if norms[src] > 0.0 {
            u.set_column(dst, &(w.column(src) / norms[src]));
        }
        v_t.set_row(dst, &v.column(src).transpose());
    }
    Svd {
        u,
        singular_values: sv,
        v_t,
    }
}

fn rotate(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let (x, y) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = c * x - s * y;
        m[(i, q)] = s * x + c * y;
    }
}
