//! Guided DDIM sampling.
//!
//! Each reverse step is split into three stages:
//!
//! 1. denoise: `x_{0|t}` from the prior score via Tweedie's formula;
//! 2. correct: a GAP / HQS / fused data-consistency update gives `x'_{0|t}`;
//! 3. resample: `ε̂_t = (x_t − sqrt(ᾱ_t) x'_{0|t}) / sqrt(1 − ᾱ_t)` and
//!    `x_{t−1} = sqrt(ᾱ_{t−1}) x'_{0|t} + sqrt(1 − ᾱ_{t−1}) (w_t sqrt(1 − ζ) ε̂_t + sqrt(ζ) ε_t)`.
//!
//! Latents are never clamped inside the loop.

mod schedule;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub use schedule::DiffusionSchedule;

use crate::consistency::{ConsistencyConfig, ConsistencyMode, DataConsistency};
use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::priors::{tweedie_denoise, ScorePrior};
use crate::sensing::LinearSensor;

/// `‖x_t‖` beyond which a reconstruction is aborted.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Generator used for every random draw of a reconstruction.
pub type SamplerRng = ChaCha8Rng;

pub fn sampler_rng(seed: u64) -> SamplerRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn standard_normal(n: usize, rng: &mut SamplerRng) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// One reverse step as recorded in a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub x0t: Vec<f64>,
    pub x0t_corrected: Vec<f64>,
    /// `‖y − H x_{0|t}‖`, absent for unconditional sampling.
    pub residual_before: Option<f64>,
    /// `‖y − H x'_{0|t}‖`.
    pub residual_after: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerState {
    pub x: Vec<f64>,
    pub t: usize,
    pub trace: Option<Vec<StepRecord>>,
}

impl SamplerState {
    pub fn new(x: Vec<f64>, t: usize, trace: bool) -> Self {
        Self {
            x,
            t,
            trace: trace.then(Vec::new),
        }
    }
}

/// Samples `x_t = sqrt(ᾱ_t) x₀ + sqrt(1 − ᾱ_t) z` with `z` drawn from `seed`.
pub fn forward_noise(
    x0: &[f64],
    t: usize,
    schedule: &DiffusionSchedule,
    seed: u64,
) -> Result<Vec<f64>> {
    if t > schedule.steps() {
        return Err(Error::InvalidParameter(format!(
            "timestep {t} beyond T = {}",
            schedule.steps()
        )));
    }
    if t == 0 {
        return Ok(x0.to_vec());
    }
    let a = schedule.alpha_bar(t);
    let z = standard_normal(x0.len(), &mut sampler_rng(seed));
    let (signal, noise) = (a.sqrt(), (1.0 - a).sqrt());
    Ok(x0
        .iter()
        .zip(&z)
        .map(|(x, z)| signal * x + noise * z)
        .collect())
}

/// The resampling stage: moves `state` from `t` to `t − 1` around the
/// corrected clean estimate. Draws noise only when `ζ > 0`.
pub fn ddim_step(
    state: SamplerState,
    x0t_corrected: &[f64],
    schedule: &DiffusionSchedule,
    rng: &mut SamplerRng,
) -> Result<SamplerState> {
    let t = state.t;
    if t == 0 {
        return Err(Error::InvalidParameter("no reverse step from t = 0".into()));
    }
    if t > schedule.steps() {
        return Err(Error::InvalidParameter(format!(
            "timestep {t} beyond T = {}",
            schedule.steps()
        )));
    }
    if x0t_corrected.len() != state.x.len() {
        return Err(Error::shape(
            "ddim_step",
            state.x.len(),
            x0t_corrected.len(),
        ));
    }
    let a_t = schedule.alpha_bar(t);
    let a_prev = schedule.alpha_bar(t - 1);
    let zeta = schedule.zeta();
    let (root_t, noise_t) = (a_t.sqrt(), (1.0 - a_t).sqrt());
    let (root_prev, noise_prev) = (a_prev.sqrt(), (1.0 - a_prev).sqrt());
    let eps_weight = schedule.w(t) * (1.0 - zeta).sqrt();
    let fresh = if zeta > 0.0 {
        Some(standard_normal(state.x.len(), rng))
    } else {
        None
    };

    let x = state
        .x
        .iter()
        .zip(x0t_corrected)
        .enumerate()
        .map(|(i, (xt, x0))| {
            let eps_hat = (xt - root_t * x0) / noise_t;
            let mut dir = eps_weight * eps_hat;
            if let Some(eps) = &fresh {
                dir += zeta.sqrt() * eps[i];
            }
            root_prev * x0 + noise_prev * dir
        })
        .collect();
    Ok(SamplerState {
        x,
        t: t - 1,
        trace: state.trace,
    })
}

/// Data-consistency stage used by [`sample`].
pub struct Guidance<'a> {
    pub consistency: &'a DataConsistency<'a>,
    pub mode: ConsistencyMode,
}

/// Runs the full reverse chain from `x_T ~ N(0, I)` (seeded) to `t = 0`.
///
/// With `guidance = None` this is unconditional DDIM.
pub fn sample(
    n: usize,
    prior: &dyn ScorePrior,
    schedule: &DiffusionSchedule,
    guidance: Option<&Guidance<'_>>,
    seed: u64,
    trace: bool,
) -> Result<SamplerState> {
    let mut rng = sampler_rng(seed);
    let steps = schedule.steps();
    let mut state = SamplerState::new(standard_normal(n, &mut rng), steps, trace);
    for t in (1..=steps).rev() {
        let x0t = tweedie_denoise(prior, &state.x, t, schedule)?;
        let (corrected, before, after) = match guidance {
            Some(g) => {
                let corrected = g.consistency.apply(&x0t, g.mode, schedule.delta(t))?;
                let residuals = if trace {
                    (
                        Some(g.consistency.residual_norm(&x0t)?),
                        Some(g.consistency.residual_norm(&corrected)?),
                    )
                } else {
                    (None, None)
                };
                (corrected, residuals.0, residuals.1)
            }
            None => (x0t.clone(), None, None),
        };
        if let Some(records) = state.trace.as_mut() {
            records.push(StepRecord {
                t,
                x0t,
                x0t_corrected: corrected.clone(),
                residual_before: before,
                residual_after: after,
            });
        }
        state = ddim_step(state, &corrected, schedule, &mut rng)?;
        let size = norm(&state.x);
        if !(size <= DIVERGENCE_LIMIT) {
            return Err(Error::Divergence { t, norm: size });
        }
    }
    Ok(state)
}

/// Fused-guidance reconstruction of `y = H x`.
///
/// `cfg.mode` selects the consistency update: `Gap` and `Hqs` fix
/// `δ_t` to 0 and 1, `Fused` reads `δ_t` from the schedule. Row-orthonormal
/// sensors take the closed-form back-projection.
pub fn reconstruct(
    y: &[f64],
    sensor: &dyn LinearSensor,
    prior: &dyn ScorePrior,
    schedule: &DiffusionSchedule,
    cfg: &ConsistencyConfig,
    seed: u64,
    trace: bool,
) -> Result<SamplerState> {
    cfg.validate()?;
    let consistency = DataConsistency::new(sensor, y, cfg.lambda)?;
    let guidance = Guidance {
        consistency: &consistency,
        mode: cfg.mode,
    };
    sample(
        sensor.signal_len(),
        prior,
        schedule,
        Some(&guidance),
        seed,
        trace,
    )
}
