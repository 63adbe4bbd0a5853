//! Small dense symmetric-matrix routines used by the fitter.
//!
//! Component spaces here are small (a window length of tens of samples), so a
//! cyclic Jacobi eigensolver is accurate, deterministic and dependency-free.

use ndarray::{Array1, Array2};

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, vectors)` with eigenvalues ascending and the
/// matching eigenvectors as columns.
pub fn eigh_symmetric(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    let mut m = a.clone();
    let mut v = Array2::eye(n);
    if n <= 1 {
        return (m.diag().to_owned(), v);
    }

    let frob = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-15 * frob.max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n - 1 {
            for q in p + 1..n {
                off += m[[p, q]] * m[[p, q]];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq.abs() <= tol / (n as f64) {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                // smaller-angle root for stability
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = m.diag().to_vec();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).expect("finite eigenvalues"));
    let eigenvalues = Array1::from_iter(order.iter().map(|&i| diag[i]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    (eigenvalues, vectors)
}

/// Moore-Penrose pseudoinverse of a row matrix `W` (d x n with d <= n),
/// computed as `W^T (W W^T)^+` through the symmetric eigendecomposition of
/// the d x d Gram matrix. Eigenvalues below `d * eps * max` are treated as
/// zero.
pub fn pinv_rows(w: &Array2<f64>) -> Array2<f64> {
    let d = w.nrows();
    let gram = w.dot(&w.t());
    let (eigenvalues, vectors) = eigh_symmetric(&gram);
    let max = eigenvalues.iter().cloned().fold(0.0, f64::max);
    let cutoff = d as f64 * f64::EPSILON * max;
    let inv = eigenvalues.mapv(|l| if l > cutoff { 1.0 / l } else { 0.0 });
    // (W W^T)^+ = V diag(inv) V^T
    let scaled = &vectors * &inv.view().insert_axis(ndarray::Axis(0));
    let gram_pinv = scaled.dot(&vectors.t());
    w.t().dot(&gram_pinv)
}

/// Norm of a vector.
pub fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::arr2;

    #[test]
    fn eigh_diagonal() {
        let a = arr2(&[[3.0, 0.0], [0.0, -1.0]]);
        let (vals, vecs) = eigh_symmetric(&a);
        assert_abs_diff_eq!(vals[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(vals[1], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(vecs[[1, 0]].abs(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(vecs[[0, 1]].abs(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn eigh_reconstructs_matrix() {
        let a = arr2(&[
            [4.0, 1.0, -2.0, 0.5],
            [1.0, 3.0, 0.0, 1.5],
            [-2.0, 0.0, 2.0, 1.0],
            [0.5, 1.5, 1.0, -1.0],
        ]);
        let (vals, vecs) = eigh_symmetric(&a);
        let lambda = Array2::from_diag(&vals);
        let back = vecs.dot(&lambda).dot(&vecs.t());
        for (x, y) in a.iter().zip(back.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
        // orthonormal columns
        let eye = vecs.t().dot(&vecs);
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(eye[[i, j]], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn pinv_of_orthonormal_rows_is_transpose() {
        let s = 0.5f64.sqrt();
        let w = arr2(&[[s, s, 0.0], [s, -s, 0.0]]);
        let a = pinv_rows(&w);
        let wt = w.t();
        for (x, y) in a.iter().zip(wt.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-13);
        }
    }

    #[test]
    fn pinv_satisfies_penrose_identities() {
        let w = arr2(&[[1.0, 2.0, 3.0, -1.0], [0.0, 1.0, -1.0, 2.0], [2.0, 0.0, 1.0, 1.0]]);
        let a = pinv_rows(&w);
        let waw = w.dot(&a).dot(&w);
        for (x, y) in waw.iter().zip(w.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
        let awa = a.dot(&w).dot(&a);
        for (x, y) in awa.iter().zip(a.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }
}
