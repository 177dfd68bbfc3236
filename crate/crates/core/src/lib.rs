//! Single-pixel imaging reconstruction with diffusion and plug-and-play priors.
//!
//! The crate is organised along the reconstruction pipeline:
//!
//! - [`sensing`]: dense and Kronecker-separable measurement operators.
//! - [`consistency`]: GAP projection, HQS regularized least squares, and their
//!   fusion, including the closed-form separable update.
//! - [`priors`]: score priors, Tweedie denoising, and denoiser adapters.
//! - [`sampler`]: diffusion schedules and the guided DDIM sampler.
//! - [`pnp`]: classical PnP-HQS / PnP-GAP baselines.
//! - [`metrics`]: PSNR and SSIM.
//! - [`harness`]: phantoms, PGM I/O, configs and CR sweeps.

// `!(x > 0.0)` is used on purpose so NaN inputs fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod consistency;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod pnp;
pub mod priors;
pub mod sampler;
pub mod sensing;

pub use consistency::{ConsistencyConfig, ConsistencyMode, DataConsistency};
pub use error::{Error, Result};
pub use harness::{ExperimentConfig, Method, PhantomKind, RunRecord};
pub use metrics::{psnr, ssim, MetricReport};
pub use pnp::{PnpConfig, PnpVariant};
pub use priors::{Denoiser, DenoiserAdapter, GaussianPrior, ScorePrior, SmoothingDenoiser};
pub use sampler::{DiffusionSchedule, SamplerState};
pub use sensing::{
    DenseSensor, LinearSensor, MeasurementGrid, SensorKind, SeparableSensor, SignalGrid,
    VecConvention,
};
