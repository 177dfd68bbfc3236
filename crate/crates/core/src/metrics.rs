//! PSNR and SSIM on single-channel grids.

use crate::error::{Error, Result};
use crate::sensing::SignalGrid;

/// Reported PSNR when the two images are identical.
pub const PSNR_CAP_DB: f64 = 99.0;
/// Side length of the SSIM Gaussian window.
pub const SSIM_WINDOW: usize = 11;
/// Standard deviation of the SSIM Gaussian window.
pub const SSIM_WINDOW_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub per_image: Option<Vec<(String, f64, f64)>>,
}

impl MetricReport {
    pub fn compare(reference: &SignalGrid, test: &SignalGrid) -> Result<Self> {
        Ok(Self {
            psnr_db: psnr(reference, test, 1.0)?,
            ssim: ssim(reference, test)?,
            per_image: None,
        })
    }
}

fn same_shape(a: &SignalGrid, b: &SignalGrid, context: &'static str) -> Result<()> {
    b.expect_shape(a.shape(), context)
}

pub fn mse(reference: &SignalGrid, test: &SignalGrid) -> Result<f64> {
    same_shape(reference, test, "mse")?;
    let sum: f64 = reference
        .as_slice()
        .iter()
        .zip(test.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / reference.len() as f64)
}

/// `10 log10(peak² / MSE)`, capped at [`PSNR_CAP_DB`].
pub fn psnr(reference: &SignalGrid, test: &SignalGrid, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "PSNR peak must be positive, got {peak}"
        )));
    }
    let err = mse(reference, test)?;
    if err == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / err).log10()).min(PSNR_CAP_DB))
}

/// Mean SSIM for images with peak value 1.
pub fn ssim(reference: &SignalGrid, test: &SignalGrid) -> Result<f64> {
    ssim_with_peak(reference, test, 1.0)
}

/// Mean SSIM over all positions where the 11×11 Gaussian window (σ = 1.5)
/// fits inside the image, with `C1 = (0.01 peak)²` and `C2 = (0.03 peak)²`.
pub fn ssim_with_peak(reference: &SignalGrid, test: &SignalGrid, peak: f64) -> Result<f64> {
    same_shape(reference, test, "ssim")?;
    if !(peak > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "SSIM peak must be positive, got {peak}"
        )));
    }
    let (rows, cols) = reference.shape();
    if rows < SSIM_WINDOW || cols < SSIM_WINDOW {
        return Err(Error::Dimension(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {rows}x{cols}"
        )));
    }
    let c1 = (SSIM_K1 * peak).powi(2);
    let c2 = (SSIM_K2 * peak).powi(2);
    let window = ssim_window();
    let a = reference.as_slice();
    let b = test.as_slice();
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();

    let mu_a = filter_valid(a, rows, cols, &window);
    let mu_b = filter_valid(b, rows, cols, &window);
    let e_aa = filter_valid(&aa, rows, cols, &window);
    let e_bb = filter_valid(&bb, rows, cols, &window);
    let e_ab = filter_valid(&ab, rows, cols, &window);

    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
        total += num / den;
    }
    Ok(total / mu_a.len() as f64)
}

fn ssim_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * SSIM_WINDOW_SIGMA * SSIM_WINDOW_SIGMA)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable correlation keeping only fully supported positions.
fn filter_valid(data: &[f64], rows: usize, cols: usize, w: &[f64]) -> Vec<f64> {
    let k = w.len();
    let (out_r, out_c) = (rows - k + 1, cols - k + 1);
    let mut tmp = vec![0.0; rows * out_c];
    for r in 0..rows {
        for c in 0..out_c {
            tmp[r * out_c + c] = (0..k).map(|j| w[j] * data[r * cols + c + j]).sum();
        }
    }
    let mut out = vec![0.0; out_r * out_c];
    for r in 0..out_r {
        for c in 0..out_c {
            out[r * out_c + c] = (0..k).map(|i| w[i] * tmp[(r + i) * out_c + c]).sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random_image(rows: usize, cols: usize, seed: u64) -> SignalGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SignalGrid::from_fn(rows, cols, |_, _| rng.random_range(0.0..1.0))
    }

    #[test]
    fn psnr_identical_is_capped() {
        let a = random_image(8, 8, 1);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), 99.0);
    }

    #[test]
    fn psnr_uniform_offset() {
        let a = SignalGrid::filled(16, 16, 0.3);
        let b = SignalGrid::filled(16, 16, 0.4);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn psnr_matches_direct_formula() {
        let a = random_image(9, 7, 2);
        let b = random_image(9, 7, 3);
        let mut sq = 0.0;
        for r in 0..9 {
            for c in 0..7 {
                sq += (a.get(r, c) - b.get(r, c)).powi(2);
            }
        }
        let expected = 10.0 * (1.0 / (sq / 63.0)).log10();
        assert!((psnr(&a, &b, 1.0).unwrap() - expected).abs() < 1e-12);
        let expected255 = 20.0 * 255f64.log10() - 10.0 * (sq / 63.0).log10();
        assert!((psnr(&a, &b, 255.0).unwrap() - expected255).abs() < 1e-9);
    }

    #[test]
    fn psnr_errors() {
        let a = random_image(4, 4, 0);
        assert!(psnr(&a, &random_image(4, 5, 0), 1.0).is_err());
        assert!(psnr(&a, &a, 0.0).is_err());
    }

    #[test]
    fn psnr_strictly_decreases_with_perturbation() {
        let a = random_image(12, 12, 4);
        let e = random_image(12, 12, 5);
        let mut last = f64::INFINITY;
        for c in [0.001, 0.01, 0.05, 0.2, 1.0] {
            let b = SignalGrid::from_fn(12, 12, |r, k| a.get(r, k) + c * e.get(r, k));
            let p = psnr(&a, &b, 1.0).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn ssim_identical_is_one() {
        let a = random_image(20, 16, 6);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn ssim_of_negative_is_negative() {
        let a = SignalGrid::from_fn(
            24,
            24,
            |r, c| if (r / 3 + c / 3) % 2 == 0 { 0.1 } else { 0.9 },
        );
        let neg = SignalGrid::from_fn(24, 24, |r, c| 1.0 - a.get(r, c));
        assert!(ssim(&a, &neg).unwrap() < 0.0);
    }

    #[test]
    fn ssim_constant_shift_luminance_only() {
        let a = SignalGrid::filled(16, 16, 0.2);
        let b = SignalGrid::filled(16, 16, 0.7);
        // Zero variance: only the luminance term remains.
        let c1 = 1e-4;
        let expected = (2.0 * 0.2 * 0.7 + c1) / (0.04 + 0.49 + c1);
        let got = ssim(&a, &b).unwrap();
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
        assert!(got < 0.6);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = random_image(10, 30, 0);
        assert!(matches!(ssim(&a, &a), Err(Error::Dimension(_))));
    }

    #[test]
    fn report_bundles_both_metrics() {
        let a = random_image(16, 16, 8);
        let r = MetricReport::compare(&a, &a).unwrap();
        assert_eq!((r.psnr_db, r.ssim), (99.0, 1.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn metrics_are_symmetric(s1 in any::<u64>(), s2 in any::<u64>()) {
            let a = random_image(14, 13, s1);
            let b = random_image(14, 13, s2);
            prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() <= 1e-12);
            prop_assert!((psnr(&a, &b, 1.0).unwrap() - psnr(&b, &a, 1.0).unwrap()).abs() <= 1e-12);
            let v = ssim(&a, &b).unwrap();
            prop_assert!((-1.0..=1.0).contains(&v));
        }
    }
}
