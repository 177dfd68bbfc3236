//! Shared fixtures for the benchmarks.

use spirecon::harness::{generate_phantom, sqrt_measurements};
use spirecon::{LinearSensor, PhantomKind, SensorKind, SeparableSensor, SignalGrid};

/// A smooth phantom, its sensor at compression ratio `cr`, and the
/// noiseless measurement.
pub struct Scene {
    pub truth: SignalGrid,
    pub sensor: SeparableSensor,
    pub y: Vec<f64>,
}

pub fn scene(size: usize, cr: f64) -> Scene {
    let truth = generate_phantom(PhantomKind::SmoothBumps, size, 0).expect("valid phantom size");
    let sensor = SeparableSensor::build(
        sqrt_measurements(cr, size),
        size,
        SensorKind::OrthonormalRandom,
        0,
    )
    .expect("valid sensor shape");
    let y = sensor.forward(truth.as_slice()).expect("matching shapes");
    Scene { truth, sensor, y }
}
