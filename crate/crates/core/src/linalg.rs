//! Small dense helpers shared by the solvers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative pivot floor below which a Cholesky factor is treated as singular.
const PIVOT_FLOOR: f64 = 1e-12;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `a + s * b`
pub fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Cholesky factorization of an SPD matrix, rejecting numerically singular input.
pub fn spd_cholesky(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let scale = m.diagonal().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let chol = Cholesky::new(m)
        .ok_or_else(|| Error::RankDeficient(format!("{what} is not positive definite")))?;
    let l = chol.l_dirty();
    let min_pivot = (0..l.nrows())
        .map(|i| l[(i, i)])
        .fold(f64::INFINITY, f64::min);
    if !(min_pivot * min_pivot > PIVOT_FLOOR * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::RankDeficient(format!(
            "{what} has pivot {min_pivot:e} relative to scale {scale:e}"
        )));
    }
    Ok(chol)
}

pub fn chol_solve(chol: &Cholesky<f64, Dyn>, rhs: &[f64]) -> Vec<f64> {
    chol.solve(&DVector::from_column_slice(rhs))
        .as_slice()
        .to_vec()
}

/// Largest absolute entry of `m m^T - I`.
pub fn gram_identity_defect(m: &DMatrix<f64>) -> f64 {
    let g = m * m.transpose();
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}
