use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{GramFactor, LinearSensor, ORTHOGONALITY_TOL};
use crate::error::{Error, Result};
use crate::linalg;

/// An explicit `m × n` measurement matrix with full row rank.
#[derive(Debug, Clone)]
pub struct DenseSensor {
    h: DMatrix<f64>,
    gram: Cholesky<f64, Dyn>,
    orthonormal_rows: bool,
}

impl DenseSensor {
    /// Rank is checked here by factoring `H H^T`.
    pub fn new(h: DMatrix<f64>) -> Result<Self> {
        if h.nrows() == 0 || h.ncols() == 0 {
            return Err(Error::Dimension("empty sensing matrix".into()));
        }
        if h.nrows() > h.ncols() {
            return Err(Error::Dimension(format!(
                "{} measurements exceed {} unknowns",
                h.nrows(),
                h.ncols()
            )));
        }
        if !linalg::all_finite(h.as_slice()) {
            return Err(Error::InvalidParameter(
                "sensing matrix has non-finite entries".into(),
            ));
        }
        let gram = linalg::spd_cholesky(&h * h.transpose(), "H H^T")?;
        let orthonormal_rows = linalg::gram_identity_defect(&h) <= ORTHOGONALITY_TOL;
        Ok(Self {
            h,
            gram,
            orthonormal_rows,
        })
    }

    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "DenseSensor::from_row_slice",
                rows * cols,
                data.len(),
            ));
        }
        Self::new(DMatrix::from_row_slice(rows, cols, data))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    fn check_len(&self, v: &[f64], expected: usize, context: &'static str) -> Result<()> {
        if v.len() != expected {
            return Err(Error::shape(context, expected, v.len()));
        }
        Ok(())
    }
}

impl LinearSensor for DenseSensor {
    fn signal_len(&self) -> usize {
        self.h.ncols()
    }

    fn measurement_len(&self) -> usize {
        self.h.nrows()
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x, self.h.ncols(), "DenseSensor::forward")?;
        Ok((&self.h * DVector::from_column_slice(x))
            .as_slice()
            .to_vec())
    }

    fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_len(y, self.h.nrows(), "DenseSensor::adjoint")?;
        Ok((self.h.tr_mul(&DVector::from_column_slice(y)))
            .as_slice()
            .to_vec())
    }

    fn gram_factor(&self, shift: f64) -> Result<GramFactor> {
        if !(shift >= 0.0) || !shift.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "Gram shift must be >= 0, got {shift}"
            )));
        }
        let m = self.h.nrows();
        if shift == 0.0 {
            return Ok(GramFactor::dense(m, self.gram.clone()));
        }
        let mut g = &self.h * self.h.transpose();
        for i in 0..m {
            g[(i, i)] += shift;
        }
        Ok(GramFactor::dense(
            m,
            linalg::spd_cholesky(g, "H H^T + shift I")?,
        ))
    }

    fn has_orthonormal_rows(&self) -> bool {
        self.orthonormal_rows
    }
}
