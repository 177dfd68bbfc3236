use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Ordering used to flatten a grid into a vector.
///
/// The crate works in [`VecConvention::RowMajor`] throughout: under it
/// `vec(U X V^T) = (U ⊗ V) vec(X)`, so the Kronecker operator keeps the
/// `U ⊗ V` factor order. Column-major stacking is supported for
/// interoperability and yields `V ⊗ U` instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VecConvention {
    #[default]
    RowMajor,
    ColumnMajor,
}

/// A real-valued 2D grid stored row-major.
///
/// Images live in `[0, 1]`; latents of the sampler are unconstrained.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalGrid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Measurements `Y = U X V^T` share the grid representation.
pub type MeasurementGrid = SignalGrid;

impl SignalGrid {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape("SignalGrid::new", rows * cols, data.len()));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite grid entry at index {bad}"
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Rebuilds a grid from a flat vector laid out in `convention` order.
    pub fn from_vec(
        rows: usize,
        cols: usize,
        v: &[f64],
        convention: VecConvention,
    ) -> Result<Self> {
        if v.len() != rows * cols {
            return Err(Error::shape("SignalGrid::from_vec", rows * cols, v.len()));
        }
        let data = match convention {
            VecConvention::RowMajor => v.to_vec(),
            VecConvention::ColumnMajor => {
                let mut d = vec![0.0; v.len()];
                for c in 0..cols {
                    for r in 0..rows {
                        d[r * cols + c] = v[c * rows + r];
                    }
                }
                d
            }
        };
        Self::new(rows, cols, data)
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn vec(&self, convention: VecConvention) -> Vec<f64> {
        match convention {
            VecConvention::RowMajor => self.data.clone(),
            VecConvention::ColumnMajor => {
                let mut v = Vec::with_capacity(self.data.len());
                for c in 0..self.cols {
                    for r in 0..self.rows {
                        v.push(self.data[r * self.cols + c]);
                    }
                }
                v
            }
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len().max(1) as f64
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &SignalGrid) -> Result<f64> {
        self.expect_shape(other.shape(), "SignalGrid::dot")?;
        Ok(crate::linalg::dot(&self.data, &other.data))
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm(&self.data)
    }

    /// Copy with every entry clamped to `[0, 1]`.
    pub fn clamped_unit(&self) -> SignalGrid {
        SignalGrid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    pub(crate) fn expect_shape(&self, shape: (usize, usize), context: &'static str) -> Result<()> {
        if self.shape() != shape {
            return Err(Error::shape(
                context,
                format!("{}x{}", shape.0, shape.1),
                format!("{}x{}", self.rows, self.cols),
            ));
        }
        Ok(())
    }
}
