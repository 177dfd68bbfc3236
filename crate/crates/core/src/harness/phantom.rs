use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sensing::SignalGrid;

pub const MIN_PHANTOM_SIZE: usize = 16;

const BUMP_COUNT: usize = 6;
const PIECEWISE_REGIONS: usize = 6;
const CHECKER_LOW: f64 = 0.2;
const CHECKER_HIGH: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhantomKind {
    SmoothBumps,
    PiecewiseConstant,
    Checker,
}

impl PhantomKind {
    pub fn name(self) -> &'static str {
        match self {
            PhantomKind::SmoothBumps => "smooth-bumps",
            PhantomKind::PiecewiseConstant => "piecewise-constant",
            PhantomKind::Checker => "checker",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "smooth-bumps" => Ok(PhantomKind::SmoothBumps),
            "piecewise-constant" => Ok(PhantomKind::PiecewiseConstant),
            "checker" => Ok(PhantomKind::Checker),
            other => Err(Error::Config(format!("unknown phantom kind `{other}`"))),
        }
    }
}

/// Square test image with values in `[0, 1]`, fully determined by
/// `(kind, size, seed)`.
///
/// - `SmoothBumps`: a sum of random Gaussian bumps, rescaled to `[0, 1]`.
/// - `PiecewiseConstant`: nearest-site regions, at most six grey levels.
/// - `Checker`: `size / 8` pixel blocks alternating between 0.2 and 0.8.
pub fn generate_phantom(kind: PhantomKind, size: usize, seed: u64) -> Result<SignalGrid> {
    if size < MIN_PHANTOM_SIZE {
        return Err(Error::InvalidParameter(format!(
            "phantom size must be at least {MIN_PHANTOM_SIZE}, got {size}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as f64;
    let grid = match kind {
        PhantomKind::SmoothBumps => {
            let bumps: Vec<[f64; 4]> = (0..BUMP_COUNT)
                .map(|_| {
                    [
                        rng.random_range(0.15 * s..0.85 * s),
                        rng.random_range(0.15 * s..0.85 * s),
                        rng.random_range(0.08 * s..0.22 * s),
                        rng.random_range(0.3..1.0),
                    ]
                })
                .collect();
            let raw = SignalGrid::from_fn(size, size, |r, c| {
                bumps
                    .iter()
                    .map(|[cr, cc, w, a]| {
                        let d2 = (r as f64 - cr).powi(2) + (c as f64 - cc).powi(2);
                        a * (-d2 / (2.0 * w * w)).exp()
                    })
                    .sum()
            });
            let lo = raw.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
            let hi = raw
                .as_slice()
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            let span = (hi - lo).max(f64::MIN_POSITIVE);
            SignalGrid::from_fn(size, size, |r, c| {
                ((raw.get(r, c) - lo) / span).clamp(0.0, 1.0)
            })
        }
        PhantomKind::PiecewiseConstant => {
            let sites: Vec<(f64, f64, f64)> = (0..PIECEWISE_REGIONS)
                .map(|_| {
                    (
                        rng.random_range(0.0..s),
                        rng.random_range(0.0..s),
                        rng.random_range(0.1..0.9),
                    )
                })
                .collect();
            SignalGrid::from_fn(size, size, |r, c| {
                let (r, c) = (r as f64, c as f64);
                sites
                    .iter()
                    .min_by(|a, b| {
                        let da = (r - a.0).powi(2) + (c - a.1).powi(2);
                        let db = (r - b.0).powi(2) + (c - b.1).powi(2);
                        da.total_cmp(&db)
                    })
                    .map(|site| site.2)
                    .unwrap_or(0.0)
            })
        }
        PhantomKind::Checker => {
            let block = (size / 8).max(2);
            SignalGrid::from_fn(size, size, |r, c| {
                if (r / block + c / block).is_multiple_of(2) {
                    CHECKER_LOW
                } else {
                    CHECKER_HIGH
                }
            })
        }
    };
    Ok(grid)
}
