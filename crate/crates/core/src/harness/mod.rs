//! Experiment plumbing: test phantoms, PGM images, configuration and
//! compression-ratio sweeps.

mod config;
mod experiment;
mod pgm;
mod phantom;

pub use config::{
    DeltaSchedule, ExperimentConfig, ImageSource, Method, PriorSpec, DEFAULT_CR_LIST,
};
pub use experiment::{
    read_outputs, resolve_output_dir, run_experiment, runs_csv, sqrt_measurements, summary_csv,
    RunRecord, RunRow, SummaryRow, OUTPUT_DIR_ENV, RUNS_CSV, SUMMARY_CSV,
};
pub use pgm::{decode_pgm, encode_pgm, export_image, import_image, write_pgm};
pub use phantom::{generate_phantom, PhantomKind, MIN_PHANTOM_SIZE};
