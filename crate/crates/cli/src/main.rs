use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spirecon::harness::{
    export_image, generate_phantom, import_image, run_experiment, ExperimentConfig, PhantomKind,
};
use spirecon::metrics::{psnr, ssim_with_peak, SSIM_WINDOW};
use spirecon::sensing::write_sensor;
use spirecon::{SensorKind, SeparableSensor};

#[derive(Parser)]
#[command(
    name = "spirecon",
    version,
    about = "Single-pixel imaging reconstruction experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a compression-ratio sweep described by a config file.
    Run {
        config: PathBuf,
        /// Worker threads (overrides `threads` in the config).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Generate a test phantom and write it as a 16-bit PGM.
    Phantom {
        #[arg(long, default_value = "smooth-bumps")]
        kind: String,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Print PSNR and SSIM between a reference and a test image.
    Metrics {
        reference: PathBuf,
        test: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        peak: f64,
    },
    /// Build a separable sensor and write it to a container file.
    Sensor {
        #[arg(long)]
        sqrt_m: usize,
        #[arg(long)]
        sqrt_n: usize,
        #[arg(long, default_value = "orthonormal-random")]
        kind: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Store U and V explicitly instead of only the generator seed.
        #[arg(long)]
        include_matrices: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> spirecon::Result<()> {
    match command {
        Command::Run { config, threads } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(t) = threads {
                cfg.threads = t;
            }
            let record = run_experiment(&cfg)?;
            println!("config {}", record.config_hash);
            println!(
                "{:>8}  {:<11} {:>5} {:>10} {:>8}",
                "cr", "method", "runs", "psnr_db", "ssim"
            );
            for s in &record.summary {
                println!(
                    "{:>8.4}  {:<11} {:>5} {:>10.3} {:>8.4}",
                    s.cr,
                    s.method.name(),
                    s.runs,
                    s.psnr,
                    s.ssim
                );
            }
            println!(
                "wrote {} files to {} in {:.2}s",
                record.artifacts.len(),
                record.output_dir.display(),
                record.wall_time.as_secs_f64()
            );
        }
        Command::Phantom {
            kind,
            size,
            seed,
            output,
        } => {
            let grid = generate_phantom(PhantomKind::parse(&kind)?, size, seed)?;
            export_image(&grid, &output)?;
        }
        Command::Metrics {
            reference,
            test,
            peak,
        } => {
            let a = import_image(&reference)?;
            let b = import_image(&test)?;
            println!("psnr_db {:.6}", psnr(&a, &b, peak)?);
            if a.rows() >= SSIM_WINDOW && a.cols() >= SSIM_WINDOW {
                println!("ssim {:.6}", ssim_with_peak(&a, &b, peak)?);
            } else {
                println!("ssim n/a");
            }
        }
        Command::Sensor {
            sqrt_m,
            sqrt_n,
            kind,
            seed,
            include_matrices,
            output,
        } => {
            let sensor = SeparableSensor::build(sqrt_m, sqrt_n, SensorKind::parse(&kind)?, seed)?;
            let file = File::create(&output)?;
            write_sensor(&sensor, include_matrices, BufWriter::new(file))?;
        }
    }
    Ok(())
}
