use crate::error::{Error, Result};

/// Noise and guidance schedule of the sampler.
///
/// `alpha_bar[t]` is the cumulative product `Π_{s≤t}(1 − β_s)` with
/// `alpha_bar[0] = 1`. The DDIM update, Tweedie's formula and the forward
/// trajectory all use this cumulative quantity; there is no separate
/// per-step alpha. Per-step sequences (`sigma`, `w`, `delta`) are indexed
/// by `t ∈ 1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    alpha_bar: Vec<f64>,
    sigma: Vec<f64>,
    zeta: f64,
    w: Vec<f64>,
    delta: Vec<f64>,
}

impl DiffusionSchedule {
    /// Linear-β schedule with `steps` steps.
    ///
    /// The deterministic schedule (`stochastic = false`) ignores `zeta` and
    /// has `σ_t = 0`, `ζ = 0`, `w_t = 1`. The stochastic schedule uses
    /// `σ_t = sqrt(ζ (1 − ᾱ_{t−1}))`, which is the noise level the ζ-mixed
    /// sampling step injects.
    pub fn build(
        steps: usize,
        beta_min: f64,
        beta_max: f64,
        zeta: f64,
        stochastic: bool,
    ) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidParameter(
                "schedule needs at least one step".into(),
            ));
        }
        if !(0.0 < beta_min && beta_min <= beta_max && beta_max < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"
            )));
        }
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        alpha_bar.push(1.0);
        let mut acc = 1.0;
        for t in 1..=steps {
            let frac = if steps == 1 {
                0.0
            } else {
                (t - 1) as f64 / (steps - 1) as f64
            };
            acc *= 1.0 - (beta_min + (beta_max - beta_min) * frac);
            alpha_bar.push(acc);
        }
        Self::from_alpha_bar(alpha_bar, if stochastic { zeta } else { 0.0 })
    }

    /// Schedule from an explicit `alpha_bar` sequence of length `T + 1`.
    pub fn from_alpha_bar(alpha_bar: Vec<f64>, zeta: f64) -> Result<Self> {
        if alpha_bar.len() < 2 {
            return Err(Error::InvalidParameter(
                "alpha_bar needs at least two entries".into(),
            ));
        }
        if !(0.0..=1.0).contains(&zeta) {
            return Err(Error::InvalidParameter(format!(
                "zeta must lie in [0, 1], got {zeta}"
            )));
        }
        let steps = alpha_bar.len() - 1;
        let sigma = (1..=steps)
            .map(|t| (zeta * (1.0 - alpha_bar[t - 1])).sqrt())
            .collect();
        let schedule = Self {
            sigma,
            zeta,
            w: vec![1.0; steps],
            delta: default_delta_ramp(steps),
            alpha_bar,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<()> {
        let steps = self.steps();
        if self.alpha_bar[0] != 1.0 {
            return Err(Error::InvalidParameter("alpha_bar[0] must equal 1".into()));
        }
        for t in 1..=steps {
            let a = self.alpha_bar[t];
            if !(a > 0.0 && a < self.alpha_bar[t - 1]) {
                return Err(Error::InvalidParameter(format!(
                    "alpha_bar must be positive and strictly decreasing (t = {t})"
                )));
            }
            let s = self.sigma[t - 1];
            if !(s >= 0.0) || 1.0 - self.alpha_bar[t - 1] - s * s < -1e-15 {
                return Err(Error::InvalidParameter(format!(
                    "sigma out of range at t = {t}"
                )));
            }
        }
        if self.sigma.len() != steps || self.w.len() != steps || self.delta.len() != steps {
            return Err(Error::InvalidParameter(
                "per-step sequences must have T entries".into(),
            ));
        }
        if self.delta.iter().any(|d| !(0.0..=1.0).contains(d)) {
            return Err(Error::InvalidParameter(
                "delta values must lie in [0, 1]".into(),
            ));
        }
        if self.w.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter("w values must be finite".into()));
        }
        Ok(())
    }

    /// Replaces the fusion weights; `delta[t - 1]` is used at step `t`.
    pub fn with_delta(mut self, delta: Vec<f64>) -> Result<Self> {
        self.delta = delta;
        self.validate()?;
        Ok(self)
    }

    pub fn with_constant_delta(self, delta: f64) -> Result<Self> {
        let steps = self.steps();
        self.with_delta(vec![delta; steps])
    }

    pub fn with_weights(mut self, w: Vec<f64>) -> Result<Self> {
        self.w = w;
        self.validate()?;
        Ok(self)
    }

    pub fn steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma[t - 1]
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn w(&self, t: usize) -> f64 {
        self.w[t - 1]
    }

    pub fn delta(&self, t: usize) -> f64 {
        self.delta[t - 1]
    }

    pub fn is_deterministic(&self) -> bool {
        self.zeta == 0.0 && self.sigma.iter().all(|s| *s == 0.0)
    }

    /// Whether the terminal marginal is close to pure noise (`ᾱ_T ≤ 1e-3`).
    pub fn reaches_noise(&self) -> bool {
        self.alpha_bar[self.steps()] <= 1e-3
    }

    /// Gradient step size `sqrt((1 − ᾱ_{t−1} − σ_t²)(1 − ᾱ_t)/ᾱ_t)` of the
    /// likelihood-gradient form of the consistency step. The sampler applies
    /// full GAP/HQS corrections instead; this is reported for inspection.
    pub fn consistency_step_size(&self, t: usize) -> f64 {
        let s = self.sigma(t);
        let a = self.alpha_bar[t];
        ((1.0 - self.alpha_bar[t - 1] - s * s).max(0.0) * (1.0 - a) / a).sqrt()
    }
}

/// Linear ramp from `δ_T = 0` (hard projection early) to `δ_1 = 1`
/// (soft HQS late).
fn default_delta_ramp(steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![0.0];
    }
    (1..=steps)
        .map(|t| (steps - t) as f64 / (steps - 1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_schedule() {
        let s = DiffusionSchedule::build(1, 0.5, 0.5, 0.0, false).unwrap();
        assert_eq!(s.alpha_bars(), &[1.0, 0.5]);
    }

    #[test]
    fn hundred_step_schedule_is_monotone_and_reaches_noise() {
        let s = DiffusionSchedule::build(100, 1e-3, 0.2, 0.0, false).unwrap();
        let mut acc = 1.0;
        for t in 1..=100 {
            acc *= 1.0 - (1e-3 + (0.2 - 1e-3) * (t - 1) as f64 / 99.0);
            assert!((s.alpha_bar(t) - acc).abs() < 1e-15);
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
        }
        assert!(s.reaches_noise());
    }

    #[test]
    fn deterministic_flag_zeroes_noise() {
        let s = DiffusionSchedule::build(50, 1e-3, 0.2, 0.7, false).unwrap();
        assert!(s.is_deterministic());
        assert!((1..=50).all(|t| s.sigma(t) == 0.0 && s.w(t) == 1.0));
        assert_eq!(s.zeta(), 0.0);
    }

    #[test]
    fn stochastic_sigma_respects_square_root_domain() {
        let s = DiffusionSchedule::build(100, 1e-3, 0.2, 0.5, true).unwrap();
        assert!(!s.is_deterministic());
        for t in 1..=100 {
            assert!(1.0 - s.alpha_bar(t - 1) - s.sigma(t).powi(2) >= -1e-15);
        }
    }

    #[test]
    fn delta_ramp_endpoints() {
        let s = DiffusionSchedule::build(11, 1e-3, 0.2, 0.0, false).unwrap();
        assert_eq!(s.delta(11), 0.0);
        assert_eq!(s.delta(1), 1.0);
        assert!((s.delta(6) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_invalid_input() {
        assert!(DiffusionSchedule::build(10, 0.0, 0.2, 0.0, false).is_err());
        assert!(DiffusionSchedule::build(10, 0.3, 0.2, 0.0, false).is_err());
        assert!(DiffusionSchedule::build(10, 0.1, 1.0, 0.0, false).is_err());
        assert!(DiffusionSchedule::build(0, 0.1, 0.2, 0.0, false).is_err());
        assert!(DiffusionSchedule::from_alpha_bar(vec![1.0, 0.5, 0.6], 0.0).is_err());
        let s = DiffusionSchedule::build(4, 0.1, 0.2, 0.0, false).unwrap();
        assert!(s.clone().with_delta(vec![0.0, 0.5, 1.5, 0.0]).is_err());
        assert!(s.with_delta(vec![0.0; 3]).is_err());
    }

    #[test]
    fn step_size_is_zero_when_fully_stochastic() {
        // ζ = 1 gives σ_t² = 1 − ᾱ_{t−1}, leaving no room for the gradient term.
        let s = DiffusionSchedule::build(10, 0.01, 0.3, 1.0, true).unwrap();
        assert!((1..=10).all(|t| s.consistency_step_size(t) < 1e-7));
        let d = DiffusionSchedule::from_alpha_bar(vec![1.0, 0.64, 0.25], 0.0).unwrap();
        let expected = ((1.0f64 - 0.64) * 0.75 / 0.25).sqrt();
        assert!((d.consistency_step_size(2) - expected).abs() < 1e-15);
    }
}
