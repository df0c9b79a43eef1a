//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SeeError};

/// Condition threshold applied to `Z'Z`-type cross products.
pub const CROSS_PRODUCT_CONDITION_LIMIT: f64 = 1e12;

/// Ratio of largest to smallest singular value; infinite for a rank-deficient matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Least-squares fitted values of every column of `target` on the columns of `basis`.
///
/// Fails when `basis'basis` has condition number above [`CROSS_PRODUCT_CONDITION_LIMIT`].
pub fn ls_fitted(basis: &DMatrix<f64>, target: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if basis.nrows() != target.nrows() {
        return Err(SeeError::DimensionMismatch(format!(
            "{what}: basis has {} rows, target has {}",
            basis.nrows(),
            target.nrows()
        )));
    }
    if basis.ncols() > basis.nrows() {
        return Err(SeeError::RankDeficient { what: what.to_string(), condition: f64::INFINITY });
    }
    let cond = condition_number(basis);
    if !(cond * cond <= CROSS_PRODUCT_CONDITION_LIMIT) {
        return Err(SeeError::RankDeficient { what: what.to_string(), condition: cond * cond });
    }
    let q = basis.clone().qr().q();
    Ok(&q * (q.transpose() * target))
}

pub fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

/// `n^{-1} M'M`.
pub fn second_moment(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.tr_mul(m) / m.nrows() as f64
}

/// Solves `a x = b` for symmetric positive definite `a`.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let chol = a.clone().cholesky().ok_or_else(|| SeeError::SingularMatrix(format!("{what} is not positive definite")))?;
    Ok(chol.solve(b))
}

/// Solves the square system `a x = b` by partial-pivot LU.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let x = a.clone().lu().solve(b).ok_or_else(|| SeeError::SingularMatrix(what.to_string()))?;
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(SeeError::SingularMatrix(what.to_string()))
    }
}

/// Symmetric square root and inverse square root of a symmetric positive definite matrix.
pub fn sym_sqrt_pair(a: &DMatrix<f64>, what: &str) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let max = eig.eigenvalues.max();
    if !(eig.eigenvalues.min() > 1e-14 * max.max(0.0)) || max <= 0.0 {
        return Err(SeeError::SingularMatrix(format!("{what} is not positive definite")));
    }
    let v = &eig.eigenvectors;
    let root = v * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * v.transpose();
    let inv_root = v * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt())) * v.transpose();
    Ok((root, inv_root))
}
