use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{DenseSensor, GramFactor, LinearSensor, SignalGrid, VecConvention, ORTHOGONALITY_TOL};
use crate::error::{Error, Result};
use crate::linalg;

/// Upper bound on `N` for [`SeparableSensor::densify`] (a 32 × 32 grid).
pub const DENSIFY_MAX_UNKNOWNS: usize = 1024;

/// Relative eigenvalue floor for the factor Gram matrices.
const RANK_TOL: f64 = 1e-12;

/// How the factor matrices of a [`SeparableSensor`] were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SensorKind {
    /// Rows of a Haar-distributed orthonormal frame (QR of a Gaussian matrix).
    OrthonormalRandom,
    /// Randomly chosen Sylvester–Hadamard rows with permuted, sign-flipped
    /// columns, scaled by `1/sqrt(sqrt_n)`. Entries are `±1/sqrt(sqrt_n)`.
    ScrambledHadamard,
    /// User-supplied `U`, `V`.
    Explicit,
}

impl SensorKind {
    pub fn name(self) -> &'static str {
        match self {
            SensorKind::OrthonormalRandom => "orthonormal-random",
            SensorKind::ScrambledHadamard => "scrambled-hadamard",
            SensorKind::Explicit => "explicit",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "orthonormal-random" => Ok(SensorKind::OrthonormalRandom),
            "scrambled-hadamard" => Ok(SensorKind::ScrambledHadamard),
            "explicit" => Ok(SensorKind::Explicit),
            other => Err(Error::InvalidParameter(format!(
                "unknown sensor kind '{other}'"
            ))),
        }
    }
}

/// Eigendecomposition of a factor Gram matrix `A A^T`.
#[derive(Debug, Clone)]
struct FactorSpectrum {
    vectors: DMatrix<f64>,
    values: Vec<f64>,
}

impl FactorSpectrum {
    fn of(a: &DMatrix<f64>, name: &str) -> Result<Self> {
        let eig = SymmetricEigen::new(a * a.transpose());
        let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let top = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let low = values.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        if !(low > RANK_TOL * top) {
            return Err(Error::RankDeficient(format!(
                "{name} does not have full row rank"
            )));
        }
        Ok(Self {
            vectors: eig.eigenvectors,
            values,
        })
    }
}

/// The separable sensor `Y = U X V^T`, i.e. `H = U ⊗ V` on row-major vectors.
///
/// `U` and `V` are both `sqrt_m × sqrt_n`. Immutable after construction.
#[derive(Debug, Clone)]
pub struct SeparableSensor {
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    kind: SensorKind,
    seed: u64,
    orthogonal_rows: bool,
    // Only needed when the rows are not orthonormal.
    spectra: Option<(FactorSpectrum, FactorSpectrum)>,
}

impl SeparableSensor {
    /// Deterministic construction for a fixed `seed`. Both kinds produce
    /// row-orthonormal factors.
    pub fn build(sqrt_m: usize, sqrt_n: usize, kind: SensorKind, seed: u64) -> Result<Self> {
        if sqrt_m == 0 || sqrt_n == 0 {
            return Err(Error::Dimension(
                "sensor dimensions must be positive".into(),
            ));
        }
        if sqrt_m > sqrt_n {
            return Err(Error::Dimension(format!(
                "sqrt_m = {sqrt_m} exceeds sqrt_n = {sqrt_n}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (u, v) = match kind {
            SensorKind::OrthonormalRandom => (
                orthonormal_rows(sqrt_m, sqrt_n, &mut rng),
                orthonormal_rows(sqrt_m, sqrt_n, &mut rng),
            ),
            SensorKind::ScrambledHadamard => {
                if !sqrt_n.is_power_of_two() {
                    return Err(Error::Dimension(format!(
                        "scrambled-hadamard needs a power-of-two sqrt_n, got {sqrt_n}"
                    )));
                }
                (
                    scrambled_hadamard(sqrt_m, sqrt_n, &mut rng),
                    scrambled_hadamard(sqrt_m, sqrt_n, &mut rng),
                )
            }
            SensorKind::Explicit => {
                return Err(Error::InvalidParameter(
                    "explicit sensors are built with SeparableSensor::from_matrices".into(),
                ))
            }
        };
        Ok(Self::from_matrices(u, v)?.with_provenance(kind, seed))
    }

    pub fn from_matrices(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<Self> {
        if u.shape() != v.shape() {
            return Err(Error::shape(
                "SeparableSensor::from_matrices",
                format!("{}x{}", u.nrows(), u.ncols()),
                format!("{}x{}", v.nrows(), v.ncols()),
            ));
        }
        if u.nrows() == 0 || u.nrows() > u.ncols() {
            return Err(Error::Dimension(format!(
                "factor matrices must be sqrt_m x sqrt_n with 0 < sqrt_m <= sqrt_n, got {}x{}",
                u.nrows(),
                u.ncols()
            )));
        }
        if !linalg::all_finite(u.as_slice()) || !linalg::all_finite(v.as_slice()) {
            return Err(Error::InvalidParameter(
                "factor matrices have non-finite entries".into(),
            ));
        }
        let orthogonal_rows = linalg::gram_identity_defect(&u) <= ORTHOGONALITY_TOL
            && linalg::gram_identity_defect(&v) <= ORTHOGONALITY_TOL;
        let spectra = if orthogonal_rows {
            None
        } else {
            Some((FactorSpectrum::of(&u, "U")?, FactorSpectrum::of(&v, "V")?))
        };
        Ok(Self {
            u,
            v,
            kind: SensorKind::Explicit,
            seed: 0,
            orthogonal_rows,
            spectra,
        })
    }

    pub(crate) fn with_provenance(mut self, kind: SensorKind, seed: u64) -> Self {
        self.kind = kind;
        self.seed = seed;
        self
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn kind(&self) -> SensorKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn orthogonal_rows(&self) -> bool {
        self.orthogonal_rows
    }

    pub fn sqrt_m(&self) -> usize {
        self.u.nrows()
    }

    pub fn sqrt_n(&self) -> usize {
        self.u.ncols()
    }

    pub fn signal_shape(&self) -> (usize, usize) {
        (self.sqrt_n(), self.sqrt_n())
    }

    pub fn measurement_shape(&self) -> (usize, usize) {
        (self.sqrt_m(), self.sqrt_m())
    }

    /// `Y = U X V^T`.
    pub fn apply(&self, x: &SignalGrid) -> Result<SignalGrid> {
        x.expect_shape(self.signal_shape(), "SeparableSensor::apply")?;
        let y = &self.u * x.to_matrix() * self.v.transpose();
        Ok(SignalGrid::from_matrix(&y))
    }

    /// `U^T Y V`, the Frobenius adjoint of [`apply`](Self::apply).
    pub fn adjoint_grid(&self, y: &SignalGrid) -> Result<SignalGrid> {
        y.expect_shape(self.measurement_shape(), "SeparableSensor::adjoint")?;
        let x = self.u.transpose() * y.to_matrix() * &self.v;
        Ok(SignalGrid::from_matrix(&x))
    }

    /// Expands to an explicit matrix `H` with `H vec(X) = vec(U X V^T)`.
    ///
    /// Row-major gives `U ⊗ V`, column-major gives `V ⊗ U`.
    pub fn densify(&self, convention: VecConvention) -> Result<DenseSensor> {
        let n = self.sqrt_n() * self.sqrt_n();
        if n > DENSIFY_MAX_UNKNOWNS {
            return Err(Error::SizeGuard {
                n,
                limit: DENSIFY_MAX_UNKNOWNS,
            });
        }
        let h = match convention {
            VecConvention::RowMajor => self.u.kronecker(&self.v),
            VecConvention::ColumnMajor => self.v.kronecker(&self.u),
        };
        DenseSensor::new(h)
    }

    fn grid_of(
        &self,
        v: &[f64],
        shape: (usize, usize),
        context: &'static str,
    ) -> Result<SignalGrid> {
        if v.len() != shape.0 * shape.1 {
            return Err(Error::shape(context, shape.0 * shape.1, v.len()));
        }
        SignalGrid::from_vec(shape.0, shape.1, v, VecConvention::RowMajor)
    }
}

impl LinearSensor for SeparableSensor {
    fn signal_len(&self) -> usize {
        self.sqrt_n() * self.sqrt_n()
    }

    fn measurement_len(&self) -> usize {
        self.sqrt_m() * self.sqrt_m()
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let grid = self.grid_of(x, self.signal_shape(), "SeparableSensor::forward")?;
        Ok(self.apply(&grid)?.into_vec())
    }

    fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        let grid = self.grid_of(y, self.measurement_shape(), "SeparableSensor::adjoint")?;
        Ok(self.adjoint_grid(&grid)?.into_vec())
    }

    fn gram_factor(&self, shift: f64) -> Result<GramFactor> {
        if !(shift >= 0.0) || !shift.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "Gram shift must be >= 0, got {shift}"
            )));
        }
        let Some((su, sv)) = &self.spectra else {
            return Ok(GramFactor::scaled(self.measurement_len(), shift));
        };
        let k = self.sqrt_m();
        let mut inv = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                inv[(i, j)] = 1.0 / (su.values[i] * sv.values[j] + shift);
            }
        }
        Ok(GramFactor::kronecker(
            su.vectors.clone(),
            sv.vectors.clone(),
            inv,
        ))
    }

    fn has_orthonormal_rows(&self) -> bool {
        self.orthogonal_rows
    }
}

/// Random orthonormal rows whose span contains the uniform pattern, so the
/// image mean is always measured.
fn orthonormal_rows(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(cols, rows, |_, c| {
        if c == 0 {
            1.0
        } else {
            rng.sample::<f64, _>(StandardNormal)
        }
    });
    // Thin Q is cols x rows with orthonormal columns.
    let mut q = g.qr().q();
    if q[(0, 0)] < 0.0 {
        q.column_mut(0).neg_mut();
    }
    q.transpose()
}

/// Sylvester-Hadamard rows with permuted columns. Row 0 (the uniform
/// pattern) is always kept; the remaining rows are drawn at random.
fn scrambled_hadamard(rows: usize, n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut row_ids: Vec<usize> = (1..n).collect();
    row_ids.shuffle(rng);
    row_ids.insert(0, 0);
    let mut col_perm: Vec<usize> = (0..n).collect();
    col_perm.shuffle(rng);
    let scale = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(rows, n, |r, c| {
        let (i, j) = (row_ids[r], col_perm[c]);
        let entry = if (i & j).count_ones() % 2 == 0 {
            1.0
        } else {
            -1.0
        };
        entry * scale
    })
}
