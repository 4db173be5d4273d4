use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::scalar::Real;

/// Default relative tolerance for numerical rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Observability matrix `[c^T; c^T S; ...; c^T S^(n-1)]` of the pair `(c^T, S)`.
pub fn observability_matrix<T: Real>(c_out: &[T], drift: &Matrix<T>) -> Result<Matrix<T>> {
    let n = c_out.len();
    if !drift.is_square() || drift.rows() != n {
        return Err(Error::dim(format!(
            "read-out of length {n} against {}x{} drift",
            drift.rows(),
            drift.cols()
        )));
    }
    let mut obs = Matrix::zeros(n, n);
    let mut row = c_out.to_vec();
    for i in 0..n {
        for (j, &v) in row.iter().enumerate() {
            obs[(i, j)] = v;
        }
        row = drift.vec_mul(&row)?;
    }
    Ok(obs)
}

/// Numerical rank by Gaussian elimination with complete pivoting. Pivots
/// below `rel_tol` times the largest entry of the matrix count as zero.
pub fn matrix_rank<T: Real>(m: &Matrix<T>, rel_tol: T) -> usize {
    let (rows, cols) = (m.rows(), m.cols());
    let scale = m.max_abs();
    if scale == T::zero() {
        return 0;
    }
    let threshold = rel_tol * scale;
    let mut a = m.clone();
    let mut rank = 0;
    for k in 0..rows.min(cols) {
        let (mut pr, mut pc, mut best) = (k, k, T::zero());
        for i in k..rows {
            for j in k..cols {
                if a[(i, j)].abs() > best {
                    best = a[(i, j)].abs();
                    pr = i;
                    pc = j;
                }
            }
        }
        if best <= threshold {
            break;
        }
        for j in 0..cols {
            let tmp = a[(k, j)];
            a[(k, j)] = a[(pr, j)];
            a[(pr, j)] = tmp;
        }
        for i in 0..rows {
            let tmp = a[(i, k)];
            a[(i, k)] = a[(i, pc)];
            a[(i, pc)] = tmp;
        }
        let pivot = a[(k, k)];
        for i in (k + 1)..rows {
            let factor = a[(i, k)] / pivot;
            if factor == T::zero() {
                continue;
            }
            for j in k..cols {
                a[(i, j)] = a[(i, j)] - factor * a[(k, j)];
            }
        }
        rank += 1;
    }
    rank
}

/// Rank of the observability matrix of `(c_out^T, drift)` at the default tolerance.
pub fn observability_rank<T: Real>(c_out: &[T], drift: &Matrix<T>) -> Result<usize> {
    observability_rank_with_tol(c_out, drift, T::lit(DEFAULT_RANK_TOL))
}

pub fn observability_rank_with_tol<T: Real>(
    c_out: &[T],
    drift: &Matrix<T>,
    rel_tol: T,
) -> Result<usize> {
    Ok(matrix_rank(&observability_matrix(c_out, drift)?, rel_tol))
}
