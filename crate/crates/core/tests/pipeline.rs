use std::io::Cursor;

use spirecon::consistency::ConsistencyConfig;
use spirecon::harness::{
    export_image, generate_phantom, import_image, read_outputs, run_experiment,
};
use spirecon::priors::{DenoiserAdapter, SmoothingDenoiser};
use spirecon::sampler::reconstruct;
use spirecon::sensing::{read_sensor, write_sensor};
use spirecon::{
    DiffusionSchedule, ExperimentConfig, LinearSensor, Method, PhantomKind, SensorKind,
    SeparableSensor, VecConvention,
};

#[test]
fn stored_sensor_reproduces_reconstruction() {
    let sensor = SeparableSensor::build(6, 16, SensorKind::ScrambledHadamard, 21).unwrap();
    let mut buf = Vec::new();
    write_sensor(&sensor, false, &mut buf).unwrap();
    let loaded = read_sensor(Cursor::new(buf)).unwrap();

    let truth = generate_phantom(PhantomKind::SmoothBumps, 16, 4).unwrap();
    let y = sensor.forward(truth.as_slice()).unwrap();
    let prior = DenoiserAdapter::new(SmoothingDenoiser::new(16, 16));
    let schedule = DiffusionSchedule::build(20, 1e-3, 0.5, 0.0, false).unwrap();
    let cfg = ConsistencyConfig::fused(0.05, 0.0);
    let a = reconstruct(&y, &sensor, &prior, &schedule, &cfg, 3, false).unwrap();
    let b = reconstruct(&y, &loaded, &prior, &schedule, &cfg, 3, false).unwrap();
    assert_eq!(a.x, b.x);
}

#[test]
fn separable_and_dense_samplers_agree() {
    let sensor = SeparableSensor::build(4, 12, SensorKind::OrthonormalRandom, 8).unwrap();
    let dense = sensor.densify(VecConvention::RowMajor).unwrap();
    let truth = generate_phantom(PhantomKind::Checker, 16, 0).unwrap();
    let x: Vec<f64> = (0..144).map(|i| truth.as_slice()[i]).collect();
    let y = sensor.forward(&x).unwrap();
    let prior = DenoiserAdapter::new(SmoothingDenoiser::new(12, 12));
    let schedule = DiffusionSchedule::build(30, 1e-3, 0.4, 0.0, false).unwrap();
    let cfg = ConsistencyConfig::fused(0.3, 0.0);
    let a = reconstruct(&y, &sensor, &prior, &schedule, &cfg, 1, false).unwrap();
    let b = reconstruct(&y, &dense, &prior, &schedule, &cfg, 1, false).unwrap();
    let worst =
        a.x.iter()
            .zip(&b.x)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn sweep_over_image_files() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<_> = (0..2)
        .map(|i| {
            let p = dir.path().join(format!("scene{i}.pgm"));
            export_image(
                &generate_phantom(PhantomKind::PiecewiseConstant, 32, i).unwrap(),
                &p,
            )
            .unwrap();
            p
        })
        .collect();
    let out = dir.path().join("out");
    let text = format!(
        "input = {}, {}\ncr_list = 0.1\nmethods = pinv, pnp-gap\nprior = smoothing\noutput_dir = {}\n",
        paths[0].display(),
        paths[1].display(),
        out.display()
    );
    let cfg = ExperimentConfig::parse(&text).unwrap();
    let record = run_experiment(&cfg).unwrap();
    assert_eq!(record.runs.len(), 4);
    assert_eq!(record.runs[0].image, "scene0");
    let pinv = record.summary_for(0.1, Method::Pinv).unwrap().psnr;
    let pnp = record.summary_for(0.1, Method::PnpGap).unwrap().psnr;
    assert!(pnp > pinv);

    let (runs, summary) = read_outputs(&out).unwrap();
    assert!(runs.starts_with("image,cr,sqrt_m,method,seed,psnr_db,ssim,residual\n"));
    assert!(!runs.contains('\r'));
    assert_eq!(summary.lines().count(), 3);
    let recon = import_image(&out.join("images/scene1_cr0.1000_pnp-gap_s0.pgm")).unwrap();
    assert_eq!(recon.shape(), (32, 32));
}
