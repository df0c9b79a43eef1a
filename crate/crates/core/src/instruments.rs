//! Datasets and the reduction of instrument sets to exactly identified form.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SeeError};
use crate::linalg::ls_fitted;

/// Response, regressors and the `n x d` instruments entering the moment vector.
///
/// The first regressor column must be the constant one.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub q: f64,
}

impl Dataset {
    /// Exactly identified data; `z` must already have `d` columns.
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, z: DMatrix<f64>, q: f64) -> Result<Self> {
        let (n, d) = x.shape();
        if !(q > 0.0 && q < 1.0) {
            return Err(SeeError::Domain(format!("quantile level must be in (0, 1), got {q}")));
        }
        if y.len() != n || z.nrows() != n {
            return Err(SeeError::DimensionMismatch(format!(
                "y has {} rows, x has {n}, z has {}",
                y.len(),
                z.nrows()
            )));
        }
        if d == 0 || n <= d {
            return Err(SeeError::InvalidInput(format!("need n > d >= 1, got n = {n}, d = {d}")));
        }
        if z.ncols() != d {
            return Err(SeeError::DimensionMismatch(format!(
                "instrument matrix has {} columns but the model has {d} coefficients; project or use a sieve",
                z.ncols()
            )));
        }
        if x.column(0).iter().any(|&v| v != 1.0) {
            return Err(SeeError::InvalidInput("first regressor column must be the constant 1".into()));
        }
        if y.iter().chain(x.iter()).chain(z.iter()).any(|v| !v.is_finite()) {
            return Err(SeeError::InvalidInput("data contain non-finite values".into()));
        }
        let sv = z.singular_values();
        if !(sv.min() > 1e-10 * sv.max()) {
            let condition = if sv.min() > 0.0 { sv.max() / sv.min() } else { f64::INFINITY };
            return Err(SeeError::RankDeficient { what: "instrument matrix".into(), condition });
        }
        Ok(Dataset { y, x, z, q })
    }

    /// Exogenous regressors: the instruments are the regressors themselves.
    pub fn exogenous(y: DVector<f64>, x: DMatrix<f64>, q: f64) -> Result<Self> {
        let z = x.clone();
        Dataset::new(y, x, z, q)
    }

    /// Replaces `z_raw` by the least-squares projection of `x` on it.
    pub fn projected(y: DVector<f64>, x: DMatrix<f64>, z_raw: &DMatrix<f64>, q: f64) -> Result<Self> {
        let z = project_instruments(&x, z_raw)?;
        Dataset::new(y, x, z, q)
    }

    /// Projects `x` on a polynomial sieve in `z_raw`.
    pub fn sieve(
        y: DVector<f64>,
        x: DMatrix<f64>,
        z_raw: &DMatrix<f64>,
        q: f64,
        degree: usize,
        interactions: bool,
    ) -> Result<Self> {
        let z = sieve_instruments(&x, z_raw, degree, interactions)?;
        Dataset::new(y, x, z, q)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_exogenous(&self) -> bool {
        self.z == self.x
    }

    pub fn with_q(&self, q: f64) -> Result<Self> {
        Dataset::new(self.y.clone(), self.x.clone(), self.z.clone(), q)
    }

    /// Residuals `y - X beta`.
    pub fn residuals(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.y - &self.x * beta
    }
}

/// Each column of the result is the least-squares projection of the matching column of `x` on `z`.
pub fn project_instruments(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if z.ncols() < x.ncols() {
        return Err(SeeError::DimensionMismatch(format!(
            "{} instruments for {} coefficients; the model must be at least exactly identified",
            z.ncols(),
            x.ncols()
        )));
    }
    ls_fitted(z, x, "instrument cross product Z'Z")
}

fn is_constant(col: &[f64]) -> bool {
    col.iter().all(|&v| v == col[0])
}

/// Polynomial basis in the non-constant columns of `z`, preceded by an intercept.
///
/// Columns are standardized before raising to powers, which leaves the spanned space unchanged.
/// Without `interactions` the basis holds powers `1..=degree` of each column; with it, all
/// monomials of total degree at most `degree`.
pub fn sieve_basis(z: &DMatrix<f64>, degree: usize, interactions: bool) -> Result<DMatrix<f64>> {
    if degree == 0 {
        return Err(SeeError::InvalidInput("sieve degree must be at least 1".into()));
    }
    let n = z.nrows();
    let cols: Vec<Vec<f64>> = z
        .column_iter()
        .map(|c| c.iter().copied().collect::<Vec<f64>>())
        .filter(|c| !is_constant(c))
        .map(|c| {
            let mean = c.iter().sum::<f64>() / n as f64;
            let sd = (c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            c.iter().map(|v| (v - mean) / sd).collect()
        })
        .collect();
    let mut basis: Vec<Vec<f64>> = vec![vec![1.0; n]];
    if interactions {
        let mut exps: Vec<Vec<usize>> = Vec::new();
        let mut current = vec![0usize; cols.len()];
        monomials(&mut exps, &mut current, 0, degree);
        for e in exps.into_iter().filter(|e| e.iter().sum::<usize>() > 0) {
            basis.push(
                (0..n)
                    .map(|i| e.iter().zip(&cols).map(|(&p, c)| c[i].powi(p as i32)).product())
                    .collect(),
            );
        }
    } else {
        for c in &cols {
            for p in 1..=degree {
                basis.push(c.iter().map(|v| v.powi(p as i32)).collect());
            }
        }
    }
    Ok(DMatrix::from_fn(n, basis.len(), |i, j| basis[j][i]))
}

fn monomials(out: &mut Vec<Vec<usize>>, current: &mut Vec<usize>, pos: usize, budget: usize) {
    if pos == current.len() {
        out.push(current.clone());
        return;
    }
    for p in 0..=budget {
        current[pos] = p;
        monomials(out, current, pos + 1, budget - p);
    }
    current[pos] = 0;
}

/// Projection of `x` on [`sieve_basis`]`(z, degree, interactions)`.
pub fn sieve_instruments(x: &DMatrix<f64>, z: &DMatrix<f64>, degree: usize, interactions: bool) -> Result<DMatrix<f64>> {
    let basis = sieve_basis(z, degree, interactions)?;
    if basis.ncols() < x.ncols() {
        return Err(SeeError::DimensionMismatch(format!(
            "sieve basis has {} columns for {} coefficients; raise the degree",
            basis.ncols(),
            x.ncols()
        )));
    }
    ls_fitted(&basis, x, "sieve basis (try a smaller degree)")
}
