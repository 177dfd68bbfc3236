//! Score priors and denoisers.
//!
//! A [`ScorePrior`] supplies `∇ log p_t(x_t)` at any timestep. Tweedie's
//! formula turns a score into a clean estimate,
//! `x_{0|t} = (x_t + (1 − ᾱ_t) score) / sqrt(ᾱ_t)`, and
//! [`DenoiserAdapter`] runs that relation backwards so an ordinary
//! Gaussian denoiser can drive the sampler.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sampler::DiffusionSchedule;
use crate::sensing::SignalGrid;

pub trait ScorePrior: Sync {
    fn score(&self, x_t: &[f64], t: usize, schedule: &DiffusionSchedule) -> Result<Vec<f64>>;
}

/// A Gaussian denoiser `D_σ`: estimates a clean signal from one corrupted by
/// additive white noise of standard deviation `sigma`.
pub trait Denoiser: Sync {
    fn denoise(&self, noisy: &[f64], sigma: f64) -> Result<Vec<f64>>;
}

impl<F> Denoiser for F
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>> + Sync,
{
    fn denoise(&self, noisy: &[f64], sigma: f64) -> Result<Vec<f64>> {
        self(noisy, sigma)
    }
}

fn check_timestep(t: usize, schedule: &DiffusionSchedule) -> Result<()> {
    if t == 0 || t > schedule.steps() {
        return Err(Error::InvalidParameter(format!(
            "timestep {t} outside 1..={}",
            schedule.steps()
        )));
    }
    Ok(())
}

/// Tweedie's formula for a given score.
pub fn tweedie_from_score(x_t: &[f64], score: &[f64], alpha_bar: f64) -> Result<Vec<f64>> {
    if !(alpha_bar > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "Tweedie needs alpha_bar > 0, got {alpha_bar}"
        )));
    }
    if score.len() != x_t.len() {
        return Err(Error::shape("tweedie_from_score", x_t.len(), score.len()));
    }
    let (noise, root) = (1.0 - alpha_bar, alpha_bar.sqrt());
    Ok(x_t
        .iter()
        .zip(score)
        .map(|(x, s)| (x + noise * s) / root)
        .collect())
}

/// Clean-signal estimate `x_{0|t}` from the prior's score.
pub fn tweedie_denoise(
    prior: &dyn ScorePrior,
    x_t: &[f64],
    t: usize,
    schedule: &DiffusionSchedule,
) -> Result<Vec<f64>> {
    let score = prior.score(x_t, t, schedule)?;
    tweedie_from_score(x_t, &score, schedule.alpha_bar(t))
}

/// Independent Gaussian prior `N(μ₀, diag(σ₀²))` on the clean signal.
///
/// Every marginal `p_t` is Gaussian as well, so its score is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    mean: Vec<f64>,
    variance: Vec<f64>,
}

impl GaussianPrior {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        if mean.len() != variance.len() {
            return Err(Error::shape("GaussianPrior", mean.len(), variance.len()));
        }
        if variance.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "prior variances must be positive".into(),
            ));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParameter("prior mean must be finite".into()));
        }
        Ok(Self { mean, variance })
    }

    pub fn isotropic(n: usize, mean: f64, variance: f64) -> Result<Self> {
        Self::new(vec![mean; n], vec![variance; n])
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> &[f64] {
        &self.variance
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.mean.len() {
            return Err(Error::shape(
                "GaussianPrior input",
                self.mean.len(),
                x.len(),
            ));
        }
        Ok(())
    }
}

/// `−(x_t − sqrt(ᾱ_t) μ₀) / (ᾱ_t σ₀² + 1 − ᾱ_t)` per coordinate.
pub fn gaussian_score(
    prior: &GaussianPrior,
    x_t: &[f64],
    t: usize,
    schedule: &DiffusionSchedule,
) -> Result<Vec<f64>> {
    check_timestep(t, schedule)?;
    prior.check_len(x_t)?;
    let a = schedule.alpha_bar(t);
    let root = a.sqrt();
    Ok(x_t
        .iter()
        .zip(prior.mean.iter().zip(&prior.variance))
        .map(|(x, (m, v))| -(x - root * m) / (a * v + 1.0 - a))
        .collect())
}

impl ScorePrior for GaussianPrior {
    fn score(&self, x_t: &[f64], t: usize, schedule: &DiffusionSchedule) -> Result<Vec<f64>> {
        gaussian_score(self, x_t, t, schedule)
    }
}

/// The MMSE denoiser of the prior, `μ₀ + σ₀²/(σ₀² + σ²)(x − μ₀)`.
impl Denoiser for GaussianPrior {
    fn denoise(&self, noisy: &[f64], sigma: f64) -> Result<Vec<f64>> {
        check_sigma(sigma)?;
        self.check_len(noisy)?;
        let s2 = sigma * sigma;
        Ok(noisy
            .iter()
            .zip(self.mean.iter().zip(&self.variance))
            .map(|(x, (m, v))| m + v / (v + s2) * (x - m))
            .collect())
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise level must be >= 0, got {sigma}"
        )));
    }
    Ok(())
}

/// Wraps a denoiser as a score prior.
///
/// At step `t` the denoiser sees `x_t / sqrt(ᾱ_t)`, whose noise standard
/// deviation is `σ_eff = sqrt((1 − ᾱ_t)/ᾱ_t)`; its output is the clean
/// estimate and the score follows from inverting Tweedie's formula.
#[derive(Debug, Clone)]
pub struct DenoiserAdapter<D> {
    denoiser: D,
}

impl<D: Denoiser> DenoiserAdapter<D> {
    pub fn new(denoiser: D) -> Self {
        Self { denoiser }
    }

    pub fn denoiser(&self) -> &D {
        &self.denoiser
    }

    pub fn effective_sigma(alpha_bar: f64) -> f64 {
        ((1.0 - alpha_bar) / alpha_bar).sqrt()
    }

    /// Checks the contract `D(x, 0) = x` on a probe signal.
    pub fn check_zero_noise_identity(&self, probe: &[f64]) -> Result<()> {
        let out = self.denoiser.denoise(probe, 0.0)?;
        if out.as_slice() != probe {
            return Err(Error::InvalidParameter(
                "denoiser is not the identity at zero noise".into(),
            ));
        }
        Ok(())
    }

    /// The wrapped denoiser's clean estimate at step `t`.
    pub fn clean_estimate(
        &self,
        x_t: &[f64],
        t: usize,
        schedule: &DiffusionSchedule,
    ) -> Result<Vec<f64>> {
        check_timestep(t, schedule)?;
        let a = schedule.alpha_bar(t);
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "adapter needs 0 < alpha_bar < 1, got {a}"
            )));
        }
        let root = a.sqrt();
        let rescaled: Vec<f64> = x_t.iter().map(|x| x / root).collect();
        let out = self.denoiser.denoise(&rescaled, Self::effective_sigma(a))?;
        if out.len() != x_t.len() {
            return Err(Error::shape("denoiser output", x_t.len(), out.len()));
        }
        Ok(out)
    }
}

/// `(sqrt(ᾱ_t) D(x_t/sqrt(ᾱ_t), σ_eff) − x_t) / (1 − ᾱ_t)`.
pub fn score_from_denoiser<D: Denoiser>(
    adapter: &DenoiserAdapter<D>,
    x_t: &[f64],
    t: usize,
    schedule: &DiffusionSchedule,
) -> Result<Vec<f64>> {
    let clean = adapter.clean_estimate(x_t, t, schedule)?;
    let a = schedule.alpha_bar(t);
    let root = a.sqrt();
    Ok(x_t
        .iter()
        .zip(&clean)
        .map(|(x, c)| (root * c - x) / (1.0 - a))
        .collect())
}

impl<D: Denoiser> ScorePrior for DenoiserAdapter<D> {
    fn score(&self, x_t: &[f64], t: usize, schedule: &DiffusionSchedule) -> Result<Vec<f64>> {
        score_from_denoiser(self, x_t, t, schedule)
    }
}

/// Default kernel width, in pixels, per unit of noise standard deviation.
pub const SMOOTHING_WIDTH_PER_SIGMA: f64 = 16.0;
/// Default cap on the kernel width in pixels.
pub const SMOOTHING_MAX_WIDTH: f64 = 1024.0;

/// Gaussian smoothing with a kernel width proportional to the noise level.
///
/// The kernel is truncated at `ceil(3 · width)` and the image is extended by
/// half-sample mirror reflection. With that boundary rule the filter
/// preserves the mean and never increases energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingDenoiser {
    rows: usize,
    cols: usize,
    width_per_sigma: f64,
    max_width: f64,
}

impl SmoothingDenoiser {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            width_per_sigma: SMOOTHING_WIDTH_PER_SIGMA,
            max_width: SMOOTHING_MAX_WIDTH,
        }
    }

    pub fn with_width(mut self, width_per_sigma: f64, max_width: f64) -> Result<Self> {
        if !(width_per_sigma > 0.0) || !(max_width > 0.0) {
            return Err(Error::InvalidParameter(
                "smoothing widths must be positive".into(),
            ));
        }
        self.width_per_sigma = width_per_sigma;
        self.max_width = max_width;
        Ok(self)
    }

    pub fn kernel_width(&self, sigma: f64) -> f64 {
        (self.width_per_sigma * sigma).min(self.max_width)
    }
}

impl Denoiser for SmoothingDenoiser {
    fn denoise(&self, noisy: &[f64], sigma: f64) -> Result<Vec<f64>> {
        check_sigma(sigma)?;
        if noisy.len() != self.rows * self.cols {
            return Err(Error::shape(
                "SmoothingDenoiser",
                self.rows * self.cols,
                noisy.len(),
            ));
        }
        if sigma == 0.0 {
            return Ok(noisy.to_vec());
        }
        Ok(gaussian_blur(
            noisy,
            self.rows,
            self.cols,
            self.kernel_width(sigma),
        ))
    }
}

/// [`SmoothingDenoiser`] with default widths applied to a grid.
pub fn smoothing_denoiser(noisy: &SignalGrid, sigma: f64) -> Result<SignalGrid> {
    let d = SmoothingDenoiser::new(noisy.rows(), noisy.cols());
    let out = d.denoise(noisy.as_slice(), sigma)?;
    SignalGrid::new(noisy.rows(), noisy.cols(), out)
}

fn gaussian_kernel(width: f64) -> Vec<f64> {
    let radius = (3.0 * width).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * width * width)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Half-sample symmetric extension, periodic with period `2n`.
fn mirror(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let j = i.rem_euclid(period);
    if j < n as isize {
        j as usize
    } else {
        (period - 1 - j) as usize
    }
}

/// `n x n` matrix of the 1-D blur, with the kernel folded onto the mirror
/// period so the cost does not grow with the kernel width.
fn blur_matrix(n: usize, kernel: &[f64]) -> DMatrix<f64> {
    let radius = (kernel.len() / 2) as isize;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for (k, w) in kernel.iter().enumerate() {
            m[(i, mirror(i as isize + k as isize - radius, n))] += w;
        }
    }
    m
}

fn gaussian_blur(data: &[f64], rows: usize, cols: usize, width: f64) -> Vec<f64> {
    let kernel = gaussian_kernel(width);
    let br = blur_matrix(rows, &kernel);
    let bc = if rows == cols {
        br.clone()
    } else {
        blur_matrix(cols, &kernel)
    };
    let x = DMatrix::from_row_slice(rows, cols, data);
    let out = br * x * bc.transpose();
    // Row-major flattening.
    out.transpose().as_slice().to_vec()
}

#[cfg(test)]
#[path = "priors_tests.rs"]
mod tests;
