use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::linalg::max_abs_diff;

fn schedule() -> DiffusionSchedule {
    DiffusionSchedule::build(100, 1e-3, 0.2, 0.0, false).unwrap()
}

fn random_prior(n: usize, rng: &mut ChaCha8Rng) -> GaussianPrior {
    GaussianPrior::new(
        (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
        (0..n).map(|_| rng.random_range(0.1..3.0)).collect(),
    )
    .unwrap()
}

/// log N(x_t; sqrt(a) μ, a v + 1 − a), summed over coordinates.
fn marginal_log_density(prior: &GaussianPrior, x: &[f64], a: f64) -> f64 {
    x.iter()
        .zip(prior.mean().iter().zip(prior.variance()))
        .map(|(x, (m, v))| {
            let var = a * v + 1.0 - a;
            -0.5 * (x - a.sqrt() * m).powi(2) / var - 0.5 * (2.0 * std::f64::consts::PI * var).ln()
        })
        .sum()
}

/// E[x0 | x_t] from joint-Gaussian conditioning:
/// μ + Cov(x0, x_t) Var(x_t)^{-1} (x_t − E[x_t]).
fn posterior_mean_oracle(prior: &GaussianPrior, x: &[f64], a: f64) -> Vec<f64> {
    x.iter()
        .zip(prior.mean().iter().zip(prior.variance()))
        .map(|(x, (m, v))| {
            let cov = a.sqrt() * v;
            let var = a * v + (1.0 - a);
            m + cov / var * (x - a.sqrt() * m)
        })
        .collect()
}

#[test]
fn score_vanishes_at_the_mode() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let prior = random_prior(8, &mut rng);
    let s = schedule();
    let x: Vec<f64> = prior
        .mean()
        .iter()
        .map(|m| s.alpha_bar(30).sqrt() * m)
        .collect();
    let score = gaussian_score(&prior, &x, 30, &s).unwrap();
    assert!(score.iter().all(|v| v.abs() < 1e-15));
}

#[test]
fn unit_variance_collapse() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mean: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let prior = GaussianPrior::new(mean.clone(), vec![1.0; 5]).unwrap();
    let s = schedule();
    let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    for t in [1, 40, 100] {
        let root = s.alpha_bar(t).sqrt();
        let expected: Vec<f64> = x.iter().zip(&mean).map(|(x, m)| -(x - root * m)).collect();
        assert!(max_abs_diff(&gaussian_score(&prior, &x, t, &s).unwrap(), &expected) < 1e-15);
    }
}

#[test]
fn scalar_score_value() {
    let prior = GaussianPrior::new(vec![0.0], vec![2.0]).unwrap();
    let s = DiffusionSchedule::from_alpha_bar(vec![1.0, 0.5], 0.0).unwrap();
    let score = gaussian_score(&prior, &[3.0], 1, &s).unwrap();
    assert!((score[0] + 2.0).abs() < 1e-15);
}

#[test]
fn score_matches_finite_differences_of_log_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = schedule();
    let h = 1e-5;
    for _ in 0..20 {
        let prior = random_prior(4, &mut rng);
        let t = rng.random_range(1..=100);
        let a = s.alpha_bar(t);
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
        let score = gaussian_score(&prior, &x, t, &s).unwrap();
        for i in 0..4 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (marginal_log_density(&prior, &xp, a) - marginal_log_density(&prior, &xm, a))
                / (2.0 * h);
            assert!(
                (fd - score[i]).abs() <= 1e-6 * score[i].abs().max(1.0),
                "fd {fd} vs {}",
                score[i]
            );
        }
    }
}

#[test]
fn score_rejects_bad_inputs() {
    let prior = GaussianPrior::isotropic(3, 0.0, 1.0).unwrap();
    let s = schedule();
    assert!(gaussian_score(&prior, &[0.0; 2], 5, &s).is_err());
    assert!(gaussian_score(&prior, &[0.0; 3], 0, &s).is_err());
    assert!(gaussian_score(&prior, &[0.0; 3], 101, &s).is_err());
    assert!(GaussianPrior::new(vec![0.0], vec![0.0]).is_err());
}

#[test]
fn tweedie_at_unit_alpha_is_identity() {
    let x = [0.3, -1.2];
    assert_eq!(
        tweedie_from_score(&x, &[5.0, 7.0], 1.0).unwrap(),
        x.to_vec()
    );
    assert!(tweedie_from_score(&x, &[0.0, 0.0], 0.0).is_err());
}

#[test]
fn tweedie_unit_variance_collapse() {
    let prior = GaussianPrior::isotropic(3, 0.0, 1.0).unwrap();
    let s = schedule();
    let x = [0.5, -2.0, 1.0];
    for t in [1, 50, 100] {
        let root = s.alpha_bar(t).sqrt();
        let expected: Vec<f64> = x.iter().map(|v| root * v).collect();
        let got = tweedie_denoise(&prior, &x, t, &s).unwrap();
        assert!(max_abs_diff(&got, &expected) < 1e-14);
    }
}

#[test]
fn tweedie_equals_gaussian_conditional_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s = schedule();
    for _ in 0..10 {
        let prior = random_prior(6, &mut rng);
        for t in [1, 25, 50, 75, 100] {
            let x: Vec<f64> = (0..6)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let got = tweedie_denoise(&prior, &x, t, &s).unwrap();
            let expected = posterior_mean_oracle(&prior, &x, s.alpha_bar(t));
            assert!(max_abs_diff(&got, &expected) < 1e-10);
        }
    }
}

fn identity(x: &[f64], _sigma: f64) -> Result<Vec<f64>> {
    Ok(x.to_vec())
}

fn shrink(x: &[f64], sigma: f64) -> Result<Vec<f64>> {
    Ok(x.iter().map(|v| v / (1.0 + sigma * sigma)).collect())
}

#[test]
fn identity_denoiser_gives_zero_score() {
    let adapter = DenoiserAdapter::new(identity);
    let s = schedule();
    let x = [0.1, 2.0, -3.0];
    for t in [1, 60, 100] {
        let score = score_from_denoiser(&adapter, &x, t, &s).unwrap();
        assert!(score.iter().all(|v| v.abs() < 1e-12), "{score:?}");
    }
    adapter.check_zero_noise_identity(&x).unwrap();
}

#[test]
fn zero_noise_contract_violation_detected() {
    let adapter =
        DenoiserAdapter::new(|x: &[f64], _s: f64| Ok(x.iter().map(|v| v * 0.5).collect()));
    assert!(adapter.check_zero_noise_identity(&[1.0]).is_err());
}

#[test]
fn adapter_round_trip_through_tweedie() {
    let d = SmoothingDenoiser::new(4, 4);
    let adapter = DenoiserAdapter::new(d);
    let s = schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x: Vec<f64> = (0..16)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    for t in 1..=100 {
        let clean = adapter.clean_estimate(&x, t, &s).unwrap();
        let back = tweedie_denoise(&adapter, &x, t, &s).unwrap();
        assert!(max_abs_diff(&back, &clean) <= 1e-12, "t = {t}");
    }
}

#[test]
fn shrinkage_denoiser_matches_unit_gaussian_score() {
    let adapter = DenoiserAdapter::new(shrink);
    let prior = GaussianPrior::isotropic(4, 0.0, 1.0).unwrap();
    let s = schedule();
    let x = [0.7, -0.2, 1.9, -3.3];
    for t in [1, 10, 50, 99] {
        let a = score_from_denoiser(&adapter, &x, t, &s).unwrap();
        let b = gaussian_score(&prior, &x, t, &s).unwrap();
        assert!(max_abs_diff(&a, &b) < 1e-10);
    }
}

#[test]
fn gaussian_mmse_denoiser_reproduces_exact_score() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let prior = random_prior(5, &mut rng);
    let adapter = DenoiserAdapter::new(prior.clone());
    let s = schedule();
    let x: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
    for t in [2, 33, 80] {
        let a = adapter.score(&x, t, &s).unwrap();
        let b = prior.score(&x, t, &s).unwrap();
        assert!(max_abs_diff(&a, &b) < 1e-9);
    }
}

#[test]
fn smoothing_identity_and_dc() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let g = SignalGrid::from_fn(12, 9, |_, _| rng.random_range(0.0..1.0));
    assert_eq!(smoothing_denoiser(&g, 0.0).unwrap(), g);
    let c = SignalGrid::filled(12, 9, 0.37);
    let out = smoothing_denoiser(&c, 0.8).unwrap();
    assert!(max_abs_diff(out.as_slice(), c.as_slice()) < 1e-14);
    assert!(smoothing_denoiser(&g, -0.1).is_err());
}

#[test]
fn smoothing_reduces_white_noise_variance() {
    let var = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
    };
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = SignalGrid::from_fn(32, 32, |_, _| rng.sample::<f64, _>(StandardNormal));
        let out = smoothing_denoiser(&g, 2.0).unwrap();
        assert!(var(out.as_slice()) < var(g.as_slice()));
    }
}

#[test]
fn wide_kernel_on_small_grid_is_stable() {
    let g = SignalGrid::from_fn(3, 2, |r, c| (r * 2 + c) as f64);
    let d = SmoothingDenoiser::new(3, 2).with_width(10.0, 50.0).unwrap();
    let out = d.denoise(g.as_slice(), 5.0).unwrap();
    let mean = out.iter().sum::<f64>() / 6.0;
    assert!((mean - g.mean()).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn smoothing_preserves_mean_and_shrinks_energy(
        seed in any::<u64>(), rows in 1usize..20, cols in 1usize..20, sigma in 0.01f64..3.0
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = SignalGrid::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
        let out = smoothing_denoiser(&g, sigma).unwrap();
        prop_assert!((out.mean() - g.mean()).abs() <= 1e-10);
        prop_assert!(out.norm() <= g.norm() * (1.0 + 1e-12));
    }
}
