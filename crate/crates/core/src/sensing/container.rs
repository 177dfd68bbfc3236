//! Versioned binary container for separable sensors.
//!
//! Layout, all integers and floats little-endian:
//!
//! | bytes | field                                   |
//! |-------|-----------------------------------------|
//! | 8     | magic `SPISENS\0`                       |
//! | 2     | format version (`u16`, currently 1)     |
//! | 1     | kind: 0 orthonormal-random, 1 scrambled-hadamard, 2 explicit |
//! | 1     | flags: bit 0 set when matrices follow   |
//! | 8     | seed (`u64`)                            |
//! | 4     | `sqrt_m` (`u32`)                        |
//! | 4     | `sqrt_n` (`u32`)                        |
//! | 8·k   | `U` then `V`, row-major `f64`, only if flag bit 0 |
//!
//! Without matrices the sensor is rebuilt from kind, seed and dimensions.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use super::{SensorKind, SeparableSensor};
use crate::error::{Error, Result};

pub const SENSOR_MAGIC: [u8; 8] = *b"SPISENS\0";
pub const SENSOR_VERSION: u16 = 1;

const FLAG_MATRICES: u8 = 1;

fn kind_code(kind: SensorKind) -> u8 {
    match kind {
        SensorKind::OrthonormalRandom => 0,
        SensorKind::ScrambledHadamard => 1,
        SensorKind::Explicit => 2,
    }
}

pub fn write_sensor<W: Write>(
    sensor: &SeparableSensor,
    include_matrices: bool,
    mut w: W,
) -> Result<()> {
    let include = include_matrices || sensor.kind() == SensorKind::Explicit;
    w.write_all(&SENSOR_MAGIC)?;
    w.write_all(&SENSOR_VERSION.to_le_bytes())?;
    w.write_all(&[
        kind_code(sensor.kind()),
        if include { FLAG_MATRICES } else { 0 },
    ])?;
    w.write_all(&sensor.seed().to_le_bytes())?;
    w.write_all(&(sensor.sqrt_m() as u32).to_le_bytes())?;
    w.write_all(&(sensor.sqrt_n() as u32).to_le_bytes())?;
    if include {
        for m in [sensor.u(), sensor.v()] {
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    w.write_all(&m[(r, c)].to_le_bytes())?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_sensor<R: Read>(mut r: R) -> Result<SeparableSensor> {
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic, "magic")?;
    if magic != SENSOR_MAGIC {
        return Err(Error::Unsupported(
            "not a sensor container (bad magic)".into(),
        ));
    }
    let mut b2 = [0u8; 2];
    read_exact(&mut r, &mut b2, "version")?;
    let version = u16::from_le_bytes(b2);
    if version != SENSOR_VERSION {
        return Err(Error::Unsupported(format!(
            "sensor container version {version}"
        )));
    }
    read_exact(&mut r, &mut b2, "kind/flags")?;
    let kind = match b2[0] {
        0 => SensorKind::OrthonormalRandom,
        1 => SensorKind::ScrambledHadamard,
        2 => SensorKind::Explicit,
        k => return Err(Error::Malformed(format!("unknown sensor kind code {k}"))),
    };
    let has_matrices = b2[1] & FLAG_MATRICES != 0;
    let mut b8 = [0u8; 8];
    read_exact(&mut r, &mut b8, "seed")?;
    let seed = u64::from_le_bytes(b8);
    let mut b4 = [0u8; 4];
    read_exact(&mut r, &mut b4, "sqrt_m")?;
    let sqrt_m = u32::from_le_bytes(b4) as usize;
    read_exact(&mut r, &mut b4, "sqrt_n")?;
    let sqrt_n = u32::from_le_bytes(b4) as usize;

    if !has_matrices {
        if kind == SensorKind::Explicit {
            return Err(Error::Malformed("explicit sensor without matrices".into()));
        }
        return SeparableSensor::build(sqrt_m, sqrt_n, kind, seed);
    }
    if sqrt_m == 0 || sqrt_n == 0 || sqrt_m > sqrt_n || sqrt_n > 1 << 16 {
        return Err(Error::Malformed(format!(
            "implausible dimensions {sqrt_m}x{sqrt_n}"
        )));
    }
    let mut read_matrix = |name: &str| -> Result<DMatrix<f64>> {
        let mut vals = Vec::with_capacity(sqrt_m * sqrt_n);
        for _ in 0..sqrt_m * sqrt_n {
            read_exact(&mut r, &mut b8, name)?;
            vals.push(f64::from_le_bytes(b8));
        }
        Ok(DMatrix::from_row_slice(sqrt_m, sqrt_n, &vals))
    };
    let u = read_matrix("U")?;
    let v = read_matrix("V")?;
    Ok(SeparableSensor::from_matrices(u, v)?.with_provenance(kind, seed))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], field: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => {
            Error::Malformed(format!("truncated sensor container at {field}"))
        }
        _ => Error::Io(e),
    })
}
