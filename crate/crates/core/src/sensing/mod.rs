//! Forward measurement operators.
//!
//! Two concrete sensors share the [`LinearSensor`] interface over flat
//! vectors: an explicit [`DenseSensor`] used for small-scale oracles, and a
//! [`SeparableSensor`] computing `Y = U X V^T` without ever forming
//! `H = U ⊗ V`. Separable sensors flatten grids in row-major order (see
//! [`VecConvention`]).

mod container;
mod dense;
mod grid;
mod separable;

use nalgebra::{Cholesky, DMatrix, Dyn};

pub use container::{read_sensor, write_sensor, SENSOR_MAGIC, SENSOR_VERSION};
pub use dense::DenseSensor;
pub use grid::{MeasurementGrid, SignalGrid, VecConvention};
pub use separable::{SensorKind, SeparableSensor, DENSIFY_MAX_UNKNOWNS};

use crate::error::Result;

/// Tolerance on `‖H H^T − I‖_max` for a sensor to count as row-orthonormal.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

/// A linear operator `H: R^n -> R^m` with full row rank.
pub trait LinearSensor: Sync {
    /// `n`, the number of unknowns.
    fn signal_len(&self) -> usize;
    /// `m`, the number of measurements.
    fn measurement_len(&self) -> usize;
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>>;
    /// Factor `H H^T + shift I` for repeated solves.
    fn gram_factor(&self, shift: f64) -> Result<GramFactor>;
    /// True when `H H^T = I` to [`ORTHOGONALITY_TOL`].
    fn has_orthonormal_rows(&self) -> bool;

    /// `H^† y = H^T (H H^T)^{-1} y`.
    fn pseudoinverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        let z = self.gram_factor(0.0)?.solve(y)?;
        self.adjoint(&z)
    }

    fn compression_ratio(&self) -> f64 {
        self.measurement_len() as f64 / self.signal_len() as f64
    }
}

/// A factored `H H^T + shift I`.
#[derive(Debug, Clone)]
pub struct GramFactor {
    len: usize,
    inner: GramInner,
}

#[derive(Debug, Clone)]
enum GramInner {
    /// `H H^T = I`, so the shifted Gram matrix is `(1 + shift) I`.
    Scaled(f64),
    Dense(Cholesky<f64, Dyn>),
    /// `U U^T = P diag(e) P^T`, `V V^T = Q diag(f) Q^T`; in row-major vec
    /// the Gram matrix acts on a grid `R` as `P ((P^T R Q) ∘ (e f^T + s)) Q^T`.
    Kronecker {
        p: DMatrix<f64>,
        q: DMatrix<f64>,
        inv_eigs: DMatrix<f64>,
    },
}

impl GramFactor {
    pub(crate) fn scaled(len: usize, shift: f64) -> Self {
        Self {
            len,
            inner: GramInner::Scaled(1.0 + shift),
        }
    }

    pub(crate) fn dense(len: usize, chol: Cholesky<f64, Dyn>) -> Self {
        Self {
            len,
            inner: GramInner::Dense(chol),
        }
    }

    pub(crate) fn kronecker(p: DMatrix<f64>, q: DMatrix<f64>, inv_eigs: DMatrix<f64>) -> Self {
        let len = p.nrows() * q.nrows();
        Self {
            len,
            inner: GramInner::Kronecker { p, q, inv_eigs },
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn solve(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.len {
            return Err(crate::error::Error::shape(
                "GramFactor::solve",
                self.len,
                r.len(),
            ));
        }
        Ok(match &self.inner {
            GramInner::Scaled(s) => r.iter().map(|v| v / s).collect(),
            GramInner::Dense(chol) => crate::linalg::chol_solve(chol, r),
            GramInner::Kronecker { p, q, inv_eigs } => {
                let rm = DMatrix::from_row_slice(p.nrows(), q.nrows(), r);
                let spectral = p.transpose() * rm * q;
                let scaled = spectral.component_mul(inv_eigs);
                let out = p * scaled * q.transpose();
                SignalGrid::from_matrix(&out).into_vec()
            }
        })
    }
}
