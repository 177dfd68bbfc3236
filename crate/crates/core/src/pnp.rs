//! Plug-and-play baselines: alternate a data-consistency step with a
//! plug-in denoiser for a fixed number of iterations.
//!
//! PnP-HQS solves `(I + H^T H / γ)^{-1}(v + H^T y / γ)`, which is the HQS
//! update of [`crate::consistency`] with `λ = γ`. PnP-GAP back-projects with
//! the pseudoinverse.

use crate::consistency::DataConsistency;
use crate::error::{Error, Result};
use crate::linalg::{norm, sub};
use crate::priors::Denoiser;
use crate::sensing::LinearSensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PnpVariant {
    Hqs,
    Gap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PnpConfig {
    pub iterations: usize,
    pub gamma: f64,
    /// Denoiser noise level per iteration, non-increasing.
    pub sigma_schedule: Vec<f64>,
    pub variant: PnpVariant,
}

impl PnpConfig {
    /// Config with the default geometric noise schedule.
    pub fn new(iterations: usize, gamma: f64, variant: PnpVariant) -> Result<Self> {
        let cfg = Self {
            iterations,
            gamma,
            sigma_schedule: default_sigma_schedule(iterations),
            variant,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_sigma_schedule(mut self, sigma_schedule: Vec<f64>) -> Result<Self> {
        self.sigma_schedule = sigma_schedule;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidParameter(
                "PnP needs at least one iteration".into(),
            ));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if self.sigma_schedule.len() != self.iterations {
            return Err(Error::InvalidParameter(format!(
                "sigma schedule has {} entries for {} iterations",
                self.sigma_schedule.len(),
                self.iterations
            )));
        }
        if self.sigma_schedule.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidParameter(
                "sigma schedule must be non-negative".into(),
            ));
        }
        if self.sigma_schedule.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidParameter(
                "sigma schedule must be non-increasing".into(),
            ));
        }
        Ok(())
    }
}

/// Geometric decay from 0.2 to 0.01.
pub fn default_sigma_schedule(iterations: usize) -> Vec<f64> {
    const START: f64 = 0.2;
    const END: f64 = 0.01;
    if iterations <= 1 {
        return vec![START; iterations];
    }
    let ratio = (END / START).powf(1.0 / (iterations - 1) as f64);
    (0..iterations)
        .map(|k| START * ratio.powi(k as i32))
        .collect()
}

/// Diagnostics of one PnP iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnpIterate {
    /// `‖y − H x‖` entering the consistency step.
    pub residual_before: f64,
    /// `‖y − H x‖` right after it.
    pub residual_after: f64,
    /// `‖D_σ(x) − x‖` of the denoising step.
    pub denoiser_shift: f64,
}

pub fn pnp_solve(
    y: &[f64],
    sensor: &dyn LinearSensor,
    denoiser: &dyn Denoiser,
    cfg: &PnpConfig,
    x_init: Option<&[f64]>,
) -> Result<Vec<f64>> {
    pnp_solve_with_history(y, sensor, denoiser, cfg, x_init).map(|(x, _)| x)
}

/// [`pnp_solve`] that also reports per-iteration residuals.
///
/// Starts from `x_init`, or `H^† y` when absent.
pub fn pnp_solve_with_history(
    y: &[f64],
    sensor: &dyn LinearSensor,
    denoiser: &dyn Denoiser,
    cfg: &PnpConfig,
    x_init: Option<&[f64]>,
) -> Result<(Vec<f64>, Vec<PnpIterate>)> {
    cfg.validate()?;
    let consistency = DataConsistency::new(sensor, y, cfg.gamma)?;
    let mut z = match x_init {
        Some(x) if x.len() != sensor.signal_len() => {
            return Err(Error::shape(
                "pnp_solve x_init",
                sensor.signal_len(),
                x.len(),
            ))
        }
        Some(x) => x.to_vec(),
        None => sensor.pseudoinverse(y)?,
    };
    let mut history = Vec::with_capacity(cfg.iterations);
    for &sigma in &cfg.sigma_schedule {
        let residual_before = consistency.residual_norm(&z)?;
        let x = match cfg.variant {
            PnpVariant::Hqs => consistency.hqs(&z)?,
            PnpVariant::Gap => consistency.gap(&z)?,
        };
        let residual_after = consistency.residual_norm(&x)?;
        z = denoiser.denoise(&x, sigma)?;
        if z.len() != x.len() {
            return Err(Error::shape("denoiser output", x.len(), z.len()));
        }
        history.push(PnpIterate {
            residual_before,
            residual_after,
            denoiser_shift: norm(&sub(&z, &x)),
        });
    }
    Ok((z, history))
}
