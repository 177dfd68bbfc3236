//! Data-consistency corrections applied to a denoised estimate `x0t`.
//!
//! - GAP: `x' = x0t + H^†(y − H x0t)`, the exact projection onto `{x : Hx = y}`.
//! - HQS: `x' = (H^T H + λI)^{-1}(H^T y + λ x0t)`, solved in measurement space as
//!   `x0t + H^T (H H^T + λI)^{-1}(y − H x0t)`.
//! - Fused: `(1 − δ)·GAP + δ·HQS`.
//!
//! When `H H^T = I` the fusion collapses to a single back-projection
//! `x0t + ρ H^T(y − H x0t)` with `ρ = 1 − λδ/(1 + λ)`; for a separable sensor
//! that is `X + ρ U^T (Y − U X V^T) V`.

use crate::error::{Error, Result};
use crate::linalg::{axpy, norm, sub};
use crate::sensing::{DenseSensor, GramFactor, LinearSensor, SeparableSensor, SignalGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConsistencyMode {
    Gap,
    Hqs,
    Fused,
}

impl ConsistencyMode {
    pub fn name(self) -> &'static str {
        match self {
            ConsistencyMode::Gap => "gap",
            ConsistencyMode::Hqs => "hqs",
            ConsistencyMode::Fused => "fused",
        }
    }
}

/// Parameters of a single consistency update.
///
/// `Gap` is fused with `δ = 0` and `Hqs` is fused with `δ = 1`; the
/// `delta` field only matters in `Fused` mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyConfig {
    pub lambda: f64,
    pub delta: f64,
    pub mode: ConsistencyMode,
}

impl ConsistencyConfig {
    pub fn new(lambda: f64, delta: f64, mode: ConsistencyMode) -> Result<Self> {
        let cfg = Self {
            lambda,
            delta,
            mode,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn gap() -> Self {
        Self {
            lambda: 1.0,
            delta: 0.0,
            mode: ConsistencyMode::Gap,
        }
    }

    pub fn hqs(lambda: f64) -> Self {
        Self {
            lambda,
            delta: 1.0,
            mode: ConsistencyMode::Hqs,
        }
    }

    pub fn fused(lambda: f64, delta: f64) -> Self {
        Self {
            lambda,
            delta,
            mode: ConsistencyMode::Fused,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        check_delta(self.delta)
    }

    /// The fusion weight this config stands for.
    pub fn effective_delta(&self) -> f64 {
        match self.mode {
            ConsistencyMode::Gap => 0.0,
            ConsistencyMode::Hqs => 1.0,
            ConsistencyMode::Fused => self.delta,
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidParameter(format!(
            "delta must lie in [0, 1], got {delta}"
        )));
    }
    Ok(())
}

/// Back-projection gain of the fused update under row-orthonormal sensing.
pub fn fusion_gain(lambda: f64, delta: f64) -> f64 {
    1.0 - lambda * delta / (1.0 + lambda)
}

fn check_signal<S: LinearSensor + ?Sized>(sensor: &S, x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != sensor.signal_len() {
        return Err(Error::shape(
            "consistency estimate",
            sensor.signal_len(),
            x.len(),
        ));
    }
    if y.len() != sensor.measurement_len() {
        return Err(Error::shape(
            "consistency measurement",
            sensor.measurement_len(),
            y.len(),
        ));
    }
    Ok(())
}

/// `x0t + H^T F^{-1} (y − H x0t)` for a factored Gram matrix `F`.
fn back_project<S: LinearSensor + ?Sized>(
    sensor: &S,
    factor: &GramFactor,
    x0t: &[f64],
    y: &[f64],
) -> Result<Vec<f64>> {
    let residual = sub(y, &sensor.forward(x0t)?);
    let step = sensor.adjoint(&factor.solve(&residual)?)?;
    Ok(axpy(x0t, 1.0, &step))
}

/// GAP back-projection onto the measurement-consistent affine set.
pub fn gap_update<S: LinearSensor + ?Sized>(
    sensor: &S,
    x0t: &[f64],
    y: &[f64],
) -> Result<Vec<f64>> {
    check_signal(sensor, x0t, y)?;
    back_project(sensor, &sensor.gram_factor(0.0)?, x0t, y)
}

/// HQS regularized least squares around `x0t`.
pub fn hqs_update<S: LinearSensor + ?Sized>(
    sensor: &S,
    x0t: &[f64],
    y: &[f64],
    lambda: f64,
) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    check_signal(sensor, x0t, y)?;
    back_project(sensor, &sensor.gram_factor(lambda)?, x0t, y)
}

/// Convex combination of the GAP and HQS updates on an explicit sensor.
pub fn fused_update(
    sensor: &DenseSensor,
    x0t: &[f64],
    y: &[f64],
    cfg: &ConsistencyConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    match cfg.mode {
        ConsistencyMode::Gap => gap_update(sensor, x0t, y),
        ConsistencyMode::Hqs => hqs_update(sensor, x0t, y, cfg.lambda),
        ConsistencyMode::Fused => {
            let g = gap_update(sensor, x0t, y)?;
            let h = hqs_update(sensor, x0t, y, cfg.lambda)?;
            let d = cfg.delta;
            Ok(g.iter()
                .zip(&h)
                .map(|(a, b)| (1.0 - d) * a + d * b)
                .collect())
        }
    }
}

/// Closed-form fused update on a row-orthonormal separable sensor:
/// `X' = X + ρ U^T (Y − U X V^T) V`.
pub fn fused_update_separable(
    sensor: &SeparableSensor,
    x0t: &SignalGrid,
    y: &SignalGrid,
    cfg: &ConsistencyConfig,
) -> Result<SignalGrid> {
    cfg.validate()?;
    if !sensor.orthogonal_rows() {
        return Err(Error::NotOrthogonal);
    }
    y.expect_shape(sensor.measurement_shape(), "fused_update_separable")?;
    let x = x0t.to_matrix();
    let (u, v) = (sensor.u(), sensor.v());
    let residual = y.to_matrix() - u * &x * v.transpose();
    let rho = fusion_gain(cfg.lambda, cfg.effective_delta());
    let out = x + (u.transpose() * residual * v) * rho;
    Ok(SignalGrid::from_matrix(&out))
}

/// A measurement `y` paired with pre-factored Gram systems, for repeated
/// corrections inside an iterative solver.
pub struct DataConsistency<'a> {
    sensor: &'a dyn LinearSensor,
    y: Vec<f64>,
    lambda: f64,
    gap: GramFactor,
    hqs: GramFactor,
}

impl<'a> DataConsistency<'a> {
    pub fn new(sensor: &'a dyn LinearSensor, y: &[f64], lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if y.len() != sensor.measurement_len() {
            return Err(Error::shape(
                "DataConsistency measurement",
                sensor.measurement_len(),
                y.len(),
            ));
        }
        Ok(Self {
            sensor,
            y: y.to_vec(),
            lambda,
            gap: sensor.gram_factor(0.0)?,
            hqs: sensor.gram_factor(lambda)?,
        })
    }

    pub fn sensor(&self) -> &dyn LinearSensor {
        self.sensor
    }

    pub fn measurement(&self) -> &[f64] {
        &self.y
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn gap(&self, x0t: &[f64]) -> Result<Vec<f64>> {
        check_signal(self.sensor, x0t, &self.y)?;
        back_project(self.sensor, &self.gap, x0t, &self.y)
    }

    pub fn hqs(&self, x0t: &[f64]) -> Result<Vec<f64>> {
        check_signal(self.sensor, x0t, &self.y)?;
        back_project(self.sensor, &self.hqs, x0t, &self.y)
    }

    /// Fused correction with weight `delta`. Row-orthonormal sensors take the
    /// single back-projection with gain [`fusion_gain`].
    pub fn fused(&self, x0t: &[f64], delta: f64) -> Result<Vec<f64>> {
        check_delta(delta)?;
        check_signal(self.sensor, x0t, &self.y)?;
        if self.sensor.has_orthonormal_rows() {
            let residual = sub(&self.y, &self.sensor.forward(x0t)?);
            let step = self.sensor.adjoint(&residual)?;
            return Ok(axpy(x0t, fusion_gain(self.lambda, delta), &step));
        }
        if delta == 0.0 {
            return self.gap(x0t);
        }
        if delta == 1.0 {
            return self.hqs(x0t);
        }
        let g = self.gap(x0t)?;
        let h = self.hqs(x0t)?;
        Ok(g.iter()
            .zip(&h)
            .map(|(a, b)| (1.0 - delta) * a + delta * b)
            .collect())
    }

    pub fn apply(&self, x0t: &[f64], mode: ConsistencyMode, delta: f64) -> Result<Vec<f64>> {
        match mode {
            ConsistencyMode::Gap => self.fused(x0t, 0.0),
            ConsistencyMode::Hqs => self.fused(x0t, 1.0),
            ConsistencyMode::Fused => self.fused(x0t, delta),
        }
    }

    /// `‖y − H x‖`.
    pub fn residual_norm(&self, x: &[f64]) -> Result<f64> {
        Ok(norm(&sub(&self.y, &self.sensor.forward(x)?)))
    }
}

#[cfg(test)]
#[path = "consistency_tests.rs"]
mod tests;
