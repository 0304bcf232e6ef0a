//! Dense linear algebra kernels: Cholesky factorization, triangular inversion and the cyclic
//! Jacobi symmetric eigensolver.

use ndarray::{Array1, Array2};

use crate::scalar::Scalar;

/// Lower-triangular `L` with `A = L Lᵀ`, or `None` if a pivot is not positive relative to
/// `rel_tol · max diag(A)`.
pub fn cholesky<T: Scalar>(a: &Array2<T>, rel_tol: T) -> Option<Array2<T>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let scale = (0..n).map(|i| a[[i, i]]).fold(T::zero(), T::max);
    if !(scale > T::zero()) {
        return None;
    }
    let floor = rel_tol * scale;
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !(diag > floor) {
            return None;
        }
        let ljj = diag.sqrt();
        l[[j, j]] = ljj;
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / ljj;
        }
    }
    Some(l)
}

/// Inverse of a nonsingular lower-triangular matrix by forward substitution.
pub fn invert_lower<T: Scalar>(l: &Array2<T>) -> Array2<T> {
    let n = l.nrows();
    let mut inv = Array2::<T>::zeros((n, n));
    for c in 0..n {
        for r in c..n {
            let mut s = if r == c { T::one() } else { T::zero() };
            for k in c..r {
                s -= l[[r, k]] * inv[[k, c]];
            }
            inv[[r, c]] = s / l[[r, r]];
        }
    }
    inv
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T> {
    /// Ascending.
    pub eigenvalues: Array1<T>,
    /// Column `k` is the unit eigenvector of `eigenvalues[k]`.
    pub eigenvectors: Array2<T>,
    pub sweeps: usize,
}

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm falls below
/// `tol · ‖A‖_F`, or `max_sweeps` sweeps.
pub fn symmetric_eigen<T: Scalar>(a: &Array2<T>, tol: T, max_sweeps: usize) -> SymmetricEigen<T> {
    let n = a.nrows();
    // Row-major scratch copies for speed.
    let mut m: Vec<T> = a.iter().copied().collect();
    let mut v: Vec<T> = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }
    let total = m.iter().map(|&x| x * x).sum::<T>().sqrt();
    let target = tol * total.max(T::min_positive_value());
    let off = |m: &[T]| {
        let mut s = T::zero();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[i * n + j] * m[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let half = T::lit(0.5);
    let one = T::one();
    let mut sweeps = 0;
    while sweeps < max_sweeps && off(&m) > target {
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) * half / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + one).sqrt());
                let c = one / (t * t + one).sqrt();
                let s = t * c;
                // Columns p and q of M.
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                // Rows p and q of M.
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                m[p * n + q] = T::zero();
                m[q * n + p] = T::zero();
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        m[x * n + x]
            .partial_cmp(&m[y * n + y])
            .expect("finite eigenvalues")
            .then(x.cmp(&y))
    });
    let eigenvalues = Array1::from_iter(order.iter().map(|&k| m[k * n + k]));
    let eigenvectors = Array2::from_shape_fn((n, n), |(r, c)| v[r * n + order[c]]);
    SymmetricEigen {
        eigenvalues,
        eigenvectors,
        sweeps,
    }
}
