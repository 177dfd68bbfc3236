use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use super::config::{DeltaSchedule, ExperimentConfig, ImageSource, Method, PriorSpec};
use super::pgm::{export_image, import_image};
use super::phantom::generate_phantom;
use crate::consistency::{ConsistencyConfig, ConsistencyMode};
use crate::error::{Error, Result};
use crate::linalg::{norm, sub};
use crate::metrics::{psnr, ssim};
use crate::pnp::{pnp_solve_with_history, PnpConfig, PnpVariant};
use crate::priors::{Denoiser, DenoiserAdapter, GaussianPrior, ScorePrior, SmoothingDenoiser};
use crate::sampler::{reconstruct, DiffusionSchedule};
use crate::sensing::{LinearSensor, SeparableSensor, SignalGrid};

/// Environment variable that replaces the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "SPIRECON_OUTPUT_DIR";

pub const RUNS_CSV: &str = "runs.csv";
pub const SUMMARY_CSV: &str = "summary.csv";

/// One `(image, cr, method, seed)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub image: String,
    pub cr: f64,
    pub sqrt_m: usize,
    pub method: Method,
    pub seed: u64,
    pub psnr: f64,
    pub ssim: f64,
    /// `‖H x − y‖ / ‖y‖` of the unclamped reconstruction.
    pub residual: f64,
}

/// Mean over images and seeds for one `(cr, method)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub cr: f64,
    pub method: Method,
    pub runs: usize,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config_hash: String,
    pub runs: Vec<RunRow>,
    pub summary: Vec<SummaryRow>,
    pub wall_time: Duration,
    pub output_dir: PathBuf,
    pub artifacts: Vec<PathBuf>,
}

impl RunRecord {
    pub fn summary_for(&self, cr: f64, method: Method) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|s| s.cr == cr && s.method == method)
    }
}

/// Number of measurement rows per side for compression ratio `cr`.
pub fn sqrt_measurements(cr: f64, sqrt_n: usize) -> usize {
    ((cr.sqrt() * sqrt_n as f64).round() as usize).clamp(1, sqrt_n)
}

/// The configured output directory, unless [`OUTPUT_DIR_ENV`] is set.
pub fn resolve_output_dir(cfg: &ExperimentConfig) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => cfg.output_dir.clone(),
    }
}

struct Image {
    name: String,
    grid: SignalGrid,
}

struct Cell {
    image: usize,
    cr: usize,
    method: Method,
    seed: u64,
}

struct CellOutput {
    row: RunRow,
    reconstruction: SignalGrid,
    trace: Option<String>,
}

/// Runs the full sweep and writes `runs.csv`, `summary.csv`, images and
/// traces under the output directory.
///
/// Rows are ordered by compression ratio, method, image and seed, in config
/// order, whatever the thread count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let start = Instant::now();
    cfg.validate()?;
    let images = load_images(cfg)?;
    let size = images[0].grid.rows();

    let sensors: Vec<SeparableSensor> = cfg
        .cr_list
        .iter()
        .map(|&cr| {
            SeparableSensor::build(
                sqrt_measurements(cr, size),
                size,
                cfg.sensor,
                cfg.sensor_seed,
            )
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for cr in 0..cfg.cr_list.len() {
        for &method in &cfg.methods {
            for image in 0..images.len() {
                for &seed in &cfg.seeds {
                    cells.push(Cell {
                        image,
                        cr,
                        method,
                        seed,
                    });
                }
            }
        }
    }

    let run_cell = |cell: &Cell| {
        run_cell(
            cfg,
            &images[cell.image],
            cfg.cr_list[cell.cr],
            &sensors[cell.cr],
            cell,
        )
    };
    let outputs: Vec<CellOutput> = if cfg.threads == 0 {
        cells.par_iter().map(run_cell).collect::<Result<_>>()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| cells.par_iter().map(run_cell).collect::<Result<_>>())?
    };

    let output_dir = resolve_output_dir(cfg);
    fs::create_dir_all(&output_dir)?;
    let mut artifacts = Vec::new();

    let runs: Vec<RunRow> = outputs.iter().map(|o| o.row.clone()).collect();
    let summary = summarize(cfg, &runs);

    let runs_path = output_dir.join(RUNS_CSV);
    fs::write(&runs_path, runs_csv(&runs))?;
    artifacts.push(runs_path);
    let summary_path = output_dir.join(SUMMARY_CSV);
    fs::write(&summary_path, summary_csv(&summary))?;
    artifacts.push(summary_path);

    if cfg.write_images {
        let dir = output_dir.join("images");
        fs::create_dir_all(&dir)?;
        for image in &images {
            let path = dir.join(format!("{}_truth.pgm", image.name));
            export_image(&image.grid, &path)?;
            artifacts.push(path);
        }
        for o in &outputs {
            let path = dir.join(format!("{}.pgm", cell_stem(&o.row)));
            export_image(&o.reconstruction.clamped_unit(), &path)?;
            artifacts.push(path);
        }
    }
    if cfg.trace {
        let dir = output_dir.join("traces");
        fs::create_dir_all(&dir)?;
        for o in &outputs {
            if let Some(trace) = &o.trace {
                let path = dir.join(format!("{}.csv", cell_stem(&o.row)));
                fs::write(&path, trace)?;
                artifacts.push(path);
            }
        }
    }

    Ok(RunRecord {
        config_hash: cfg.hash(),
        runs,
        summary,
        wall_time: start.elapsed(),
        output_dir,
        artifacts,
    })
}

fn cell_stem(row: &RunRow) -> String {
    format!(
        "{}_cr{:.4}_{}_s{}",
        row.image,
        row.cr,
        row.method.name(),
        row.seed
    )
}

fn load_images(cfg: &ExperimentConfig) -> Result<Vec<Image>> {
    let images: Vec<Image> = match &cfg.image {
        ImageSource::Phantom {
            kind,
            size,
            count,
            seed,
        } => (0..*count)
            .map(|i| {
                Ok(Image {
                    name: format!("{}-{}", kind.name(), seed + i as u64),
                    grid: generate_phantom(*kind, *size, seed + i as u64)?,
                })
            })
            .collect::<Result<_>>()?,
        ImageSource::Files(paths) => paths
            .iter()
            .map(|p| {
                Ok(Image {
                    name: p
                        .file_stem()
                        .and_then(|s| s.to_str())
                        .unwrap_or("image")
                        .to_string(),
                    grid: import_image(p)?,
                })
            })
            .collect::<Result<_>>()?,
    };
    let (rows, cols) = images[0].grid.shape();
    if rows != cols || images.iter().any(|im| im.grid.shape() != (rows, cols)) {
        return Err(Error::Config(
            "all input images must be square and share one size".into(),
        ));
    }
    Ok(images)
}

fn schedule(cfg: &ExperimentConfig) -> Result<DiffusionSchedule> {
    let s = DiffusionSchedule::build(
        cfg.steps,
        cfg.beta_min,
        cfg.beta_max,
        cfg.zeta,
        cfg.zeta > 0.0,
    )?;
    match cfg.delta {
        DeltaSchedule::Ramp => Ok(s),
        DeltaSchedule::Constant(d) => s.with_constant_delta(d),
    }
}

fn smoothing(size: usize, width_per_sigma: f64, max_width: f64) -> Result<SmoothingDenoiser> {
    SmoothingDenoiser::new(size, size).with_width(width_per_sigma, max_width)
}

fn run_cell(
    cfg: &ExperimentConfig,
    image: &Image,
    cr: f64,
    sensor: &SeparableSensor,
    cell: &Cell,
) -> Result<CellOutput> {
    let size = image.grid.rows();
    let n = size * size;
    let y = sensor.forward(image.grid.as_slice())?;
    let mut trace = None;

    let x = match cell.method {
        Method::Pinv => sensor.pseudoinverse(&y)?,
        Method::DdimGap | Method::DdimHqs | Method::DdimFused => {
            let prior: Box<dyn ScorePrior> = match cfg.prior {
                PriorSpec::Smoothing {
                    width_per_sigma,
                    max_width,
                } => Box::new(DenoiserAdapter::new(smoothing(
                    size,
                    width_per_sigma,
                    max_width,
                )?)),
                PriorSpec::Gaussian { mean, variance } => {
                    Box::new(GaussianPrior::isotropic(n, mean, variance)?)
                }
                PriorSpec::None => unreachable!("validated: diffusion methods need a prior"),
            };
            let mode = match cell.method {
                Method::DdimGap => ConsistencyMode::Gap,
                Method::DdimHqs => ConsistencyMode::Hqs,
                _ => ConsistencyMode::Fused,
            };
            let consistency = ConsistencyConfig::new(cfg.lambda, 0.0, mode)?;
            let state = reconstruct(
                &y,
                sensor,
                prior.as_ref(),
                &schedule(cfg)?,
                &consistency,
                cell.seed,
                cfg.trace,
            )?;
            if let Some(records) = &state.trace {
                let mut s = String::from("t,residual_before,residual_after\n");
                for r in records {
                    let _ = writeln!(
                        s,
                        "{},{:.6},{:.6}",
                        r.t,
                        r.residual_before.unwrap_or(f64::NAN),
                        r.residual_after.unwrap_or(f64::NAN)
                    );
                }
                trace = Some(s);
            }
            state.x
        }
        Method::PnpHqs | Method::PnpGap => {
            let denoiser: Box<dyn Denoiser> = match cfg.prior {
                PriorSpec::Smoothing {
                    width_per_sigma,
                    max_width,
                } => Box::new(smoothing(size, width_per_sigma, max_width)?),
                PriorSpec::Gaussian { mean, variance } => {
                    Box::new(GaussianPrior::isotropic(n, mean, variance)?)
                }
                PriorSpec::None => unreachable!("validated: PnP methods need a prior"),
            };
            let variant = if cell.method == Method::PnpHqs {
                PnpVariant::Hqs
            } else {
                PnpVariant::Gap
            };
            let pnp = PnpConfig::new(cfg.pnp_iterations, cfg.pnp_gamma, variant)?;
            let (x, history) = pnp_solve_with_history(&y, sensor, denoiser.as_ref(), &pnp, None)?;
            if cfg.trace {
                let mut s =
                    String::from("iteration,residual_before,residual_after,denoiser_shift\n");
                for (k, it) in history.iter().enumerate() {
                    let _ = writeln!(
                        s,
                        "{},{:.6},{:.6},{:.6}",
                        k + 1,
                        it.residual_before,
                        it.residual_after,
                        it.denoiser_shift
                    );
                }
                trace = Some(s);
            }
            x
        }
    };

    let hx = sensor.forward(&x)?;
    let y_norm = norm(&y);
    let residual = if y_norm > 0.0 {
        norm(&sub(&hx, &y)) / y_norm
    } else {
        norm(&hx)
    };
    let reconstruction = SignalGrid::new(size, size, x)?;
    let clamped = reconstruction.clamped_unit();
    let ssim_value = if size >= crate::metrics::SSIM_WINDOW {
        ssim(&image.grid, &clamped)?
    } else {
        f64::NAN
    };
    Ok(CellOutput {
        row: RunRow {
            image: image.name.clone(),
            cr,
            sqrt_m: sensor.sqrt_m(),
            method: cell.method,
            seed: cell.seed,
            psnr: psnr(&image.grid, &clamped, 1.0)?,
            ssim: ssim_value,
            residual,
        },
        reconstruction,
        trace,
    })
}

fn summarize(cfg: &ExperimentConfig, runs: &[RunRow]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for &cr in &cfg.cr_list {
        for &method in &cfg.methods {
            let cell: Vec<&RunRow> = runs
                .iter()
                .filter(|r| r.cr == cr && r.method == method)
                .collect();
            let k = cell.len() as f64;
            out.push(SummaryRow {
                cr,
                method,
                runs: cell.len(),
                psnr: cell.iter().map(|r| r.psnr).sum::<f64>() / k,
                ssim: cell.iter().map(|r| r.ssim).sum::<f64>() / k,
            });
        }
    }
    out
}

pub fn runs_csv(runs: &[RunRow]) -> String {
    let mut s = String::from("image,cr,sqrt_m,method,seed,psnr_db,ssim,residual\n");
    for r in runs {
        let _ = writeln!(
            s,
            "{},{:.6},{},{},{},{:.6},{:.6},{:.6}",
            r.image,
            r.cr,
            r.sqrt_m,
            r.method.name(),
            r.seed,
            r.psnr,
            r.ssim,
            r.residual
        );
    }
    s
}

pub fn summary_csv(summary: &[SummaryRow]) -> String {
    let mut s = String::from("cr,method,runs,psnr_db,ssim\n");
    for r in summary {
        let _ = writeln!(
            s,
            "{:.6},{},{},{:.6},{:.6}",
            r.cr,
            r.method.name(),
            r.runs,
            r.psnr,
            r.ssim
        );
    }
    s
}

/// Reads back the CSV files of a finished run.
pub fn read_outputs(dir: &Path) -> Result<(String, String)> {
    Ok((
        fs::read_to_string(dir.join(RUNS_CSV))?,
        fs::read_to_string(dir.join(SUMMARY_CSV))?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(dir: &Path, extra: &str) -> ExperimentConfig {
        let mut entries: Vec<(String, String)> = [
            ("size", "16"),
            ("images", "2"),
            ("cr_list", "0.25,0.5"),
            ("T", "10"),
            ("beta_max", "0.6"),
            ("pnp_iterations", "4"),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        entries.push(("output_dir".into(), dir.display().to_string()));
        for line in extra.lines() {
            let (k, v) = line.split_once('=').unwrap();
            entries.retain(|(key, _)| key != k.trim());
            entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        let text: String = entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        ExperimentConfig::parse(&text).unwrap()
    }

    #[test]
    fn measurement_count_from_ratio() {
        assert_eq!(sqrt_measurements(0.25, 64), 32);
        assert_eq!(sqrt_measurements(0.01, 64), 6);
        assert_eq!(sqrt_measurements(0.05, 64), 14);
        assert_eq!(sqrt_measurements(1.0, 16), 16);
        assert_eq!(sqrt_measurements(1e-6, 16), 1);
    }

    #[test]
    fn pinv_rows_are_the_pseudoinverse() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(
            dir.path(),
            "methods = pinv\nprior = none\nwrite_images = true",
        );
        let rec = run_experiment(&cfg).unwrap();
        assert_eq!(rec.runs.len(), 4);
        let img = generate_phantom(super::super::PhantomKind::SmoothBumps, 16, 0).unwrap();
        let sensor = SeparableSensor::build(8, 16, cfg.sensor, 0).unwrap();
        let x = sensor
            .pseudoinverse(&sensor.forward(img.as_slice()).unwrap())
            .unwrap();
        let expected = psnr(
            &img,
            &SignalGrid::new(16, 16, x).unwrap().clamped_unit(),
            1.0,
        )
        .unwrap();
        assert_eq!(rec.runs[0].psnr, expected);
        assert!(rec.runs.iter().all(|r| r.residual < 1e-10));
        assert!(dir.path().join("images/smooth-bumps-0_truth.pgm").exists());
        assert!(dir
            .path()
            .join("images/smooth-bumps-1_cr0.5000_pinv_s0.pgm")
            .exists());
    }

    #[test]
    fn single_cell_summary_equals_row() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(
            dir.path(),
            "images = 1\ncr_list = 0.25\nmethods = ddim-fused\nwrite_images = false",
        );
        let rec = run_experiment(&cfg).unwrap();
        assert_eq!(rec.runs.len(), 1);
        assert_eq!(rec.summary[0].psnr, rec.runs[0].psnr);
        assert_eq!(rec.summary[0].ssim, rec.runs[0].ssim);
        let (runs, summary) = read_outputs(dir.path()).unwrap();
        let run_fields: Vec<&str> = runs.lines().nth(1).unwrap().split(',').collect();
        let sum_fields: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(run_fields[5], sum_fields[3]);
    }

    #[test]
    fn deterministic_seeds_differ_only_through_initial_noise() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(
            dir.path(),
            "images = 1\ncr_list = 0.25\nmethods = ddim-gap\nseeds = 1,2\nwrite_images = false",
        );
        let rec = run_experiment(&cfg).unwrap();
        assert_eq!(rec.runs.len(), 2);
        assert_ne!(rec.runs[0].psnr, rec.runs[1].psnr);
        let again = run_experiment(&cfg).unwrap();
        assert_eq!(rec.runs, again.runs);
    }

    #[test]
    fn summary_is_mean_of_rows() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(
            dir.path(),
            "methods = pinv,ddim-hqs,pnp-gap\nseeds = 0,1\nzeta = 0.3\nwrite_images = false",
        );
        let rec = run_experiment(&cfg).unwrap();
        assert_eq!(rec.summary.len(), 6);
        for s in &rec.summary {
            let cell: Vec<&RunRow> = rec
                .runs
                .iter()
                .filter(|r| r.cr == s.cr && r.method == s.method)
                .collect();
            assert_eq!(cell.len(), 4);
            assert_eq!(s.runs, 4);
            let mean = cell.iter().map(|r| r.psnr).sum::<f64>() / 4.0;
            assert!((s.psnr - mean).abs() <= 1e-12);
        }
    }

    #[test]
    fn writes_traces_on_request() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path(), "images = 1\ncr_list = 0.25\nmethods = ddim-fused,pnp-hqs\ntrace = true\nwrite_images = false");
        let rec = run_experiment(&cfg).unwrap();
        let ddim = fs::read_to_string(
            dir.path()
                .join("traces/smooth-bumps-0_cr0.2500_ddim-fused_s0.csv"),
        )
        .unwrap();
        assert_eq!(ddim.lines().count(), 11);
        let pnp = fs::read_to_string(
            dir.path()
                .join("traces/smooth-bumps-0_cr0.2500_pnp-hqs_s0.csv"),
        )
        .unwrap();
        assert_eq!(pnp.lines().count(), 5);
        assert_eq!(rec.artifacts.len(), 4);
    }

    #[test]
    fn csv_dialect() {
        let rows = [RunRow {
            image: "a".into(),
            cr: 0.05,
            sqrt_m: 3,
            method: Method::PnpGap,
            seed: 7,
            psnr: 12.3456789,
            ssim: 0.5,
            residual: 1e-12,
        }];
        assert_eq!(
            runs_csv(&rows),
            "image,cr,sqrt_m,method,seed,psnr_db,ssim,residual\na,0.050000,3,pnp-gap,7,12.345679,0.500000,0.000000\n"
        );
    }

    #[test]
    fn missing_input_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "input = {}\noutput_dir = {}",
            dir.path().join("none.pgm").display(),
            dir.path().display()
        );
        let cfg = ExperimentConfig::parse(&text).unwrap();
        assert!(matches!(run_experiment(&cfg), Err(Error::Io(_))));
    }
}
