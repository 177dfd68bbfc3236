use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sensing::SignalGrid;

const MAXVAL_16: u16 = u16::MAX;

/// Encodes a grid as a 16-bit binary PGM (P5, maxval 65535, big-endian).
///
/// Values are clamped to `[0, 1]` and rounded to the nearest level.
pub fn encode_pgm(grid: &SignalGrid) -> Result<Vec<u8>> {
    if !grid.as_slice().iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidParameter(
            "cannot export non-finite pixels".into(),
        ));
    }
    let mut out = format!("P5\n{} {}\n{}\n", grid.cols(), grid.rows(), MAXVAL_16).into_bytes();
    out.reserve(grid.len() * 2);
    for v in grid.as_slice() {
        let q = (v.clamp(0.0, 1.0) * f64::from(MAXVAL_16)).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    Ok(out)
}

pub fn write_pgm<W: Write>(grid: &SignalGrid, mut w: W) -> Result<()> {
    w.write_all(&encode_pgm(grid)?)?;
    Ok(())
}

pub fn export_image(grid: &SignalGrid, path: &Path) -> Result<()> {
    let bytes = encode_pgm(grid)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn import_image(path: &Path) -> Result<SignalGrid> {
    let bytes = fs::read(path)?;
    decode_pgm(&bytes)
}

/// Parses a binary PGM with maxval 255 or 65535 into `[0, 1]` values.
pub fn decode_pgm(bytes: &[u8]) -> Result<SignalGrid> {
    if bytes.len() < 2 {
        return Err(Error::Malformed("PGM shorter than its magic number".into()));
    }
    if &bytes[..2] != b"P5" {
        return Err(Error::Unsupported(
            "only binary PGM (P5) images are supported".into(),
        ));
    }
    let mut pos = 2;
    let width = header_field(bytes, &mut pos, "width")?;
    let height = header_field(bytes, &mut pos, "height")?;
    let maxval = header_field(bytes, &mut pos, "maxval")?;
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::Malformed("PGM header not terminated".into())),
    }
    if width == 0 || height == 0 {
        return Err(Error::Malformed("PGM has zero size".into()));
    }
    let sample_bytes = match maxval {
        255 => 1,
        65535 => 2,
        other => {
            return Err(Error::Unsupported(format!(
                "PGM maxval {other}, expected 255 or 65535"
            )))
        }
    };
    let count = width
        .checked_mul(height)
        .ok_or_else(|| Error::Malformed("PGM size overflows".into()))?;
    let raster = &bytes[pos..];
    if raster.len() < count * sample_bytes {
        return Err(Error::Malformed(format!(
            "PGM raster truncated: {} of {} bytes",
            raster.len(),
            count * sample_bytes
        )));
    }
    let scale = maxval as f64;
    let data = match sample_bytes {
        1 => raster[..count]
            .iter()
            .map(|&b| f64::from(b) / scale)
            .collect(),
        _ => raster[..2 * count]
            .chunks_exact(2)
            .map(|p| f64::from(u16::from_be_bytes([p[0], p[1]])) / scale)
            .collect(),
    };
    SignalGrid::new(height, width, data)
}

fn header_field(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            Some(_) => break,
            None => return Err(Error::Malformed(format!("PGM header ends before {what}"))),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Malformed(format!("PGM {what} is not a number")));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Malformed(format!("PGM {what} out of range")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_half_quantizes_to_midpoint() {
        let g = SignalGrid::filled(3, 4, 0.5);
        let bytes = encode_pgm(&g).unwrap();
        let header = b"P5\n4 3\n65535\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len(), header.len() + 24);
        for p in bytes[header.len()..].chunks_exact(2) {
            let v = u16::from_be_bytes([p[0], p[1]]);
            assert!((32767..=32769).contains(&v));
        }
    }

    #[test]
    fn clamps_out_of_range() {
        let g = SignalGrid::new(1, 2, vec![1.7, -0.3]).unwrap();
        let bytes = encode_pgm(&g).unwrap();
        let n = bytes.len();
        assert_eq!(&bytes[n - 4..], &[0xFF, 0xFF, 0x00, 0x00]);
    }

    #[test]
    fn round_trip_within_quantization() {
        let g = SignalGrid::from_fn(17, 9, |r, c| ((r * 31 + c * 7) % 101) as f64 / 100.0);
        let back = decode_pgm(&encode_pgm(&g).unwrap()).unwrap();
        assert_eq!(back.shape(), (17, 9));
        for (a, b) in g.as_slice().iter().zip(back.as_slice()) {
            assert!((a - b).abs() <= 1.0 / 65535.0);
        }
    }

    #[test]
    fn eight_bit_scaling_and_comments() {
        let mut bytes = b"P5\n# made by hand\n3 1\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 51, 255]);
        let g = decode_pgm(&bytes).unwrap();
        assert_eq!(g.as_slice(), &[0.0, 0.2, 1.0]);
    }

    #[test]
    fn truncated_raster_is_malformed() {
        let bytes = encode_pgm(&SignalGrid::filled(4, 4, 0.25)).unwrap();
        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(decode_pgm(cut), Err(Error::Malformed(_))));
        assert!(matches!(decode_pgm(b"P5\n4 "), Err(Error::Malformed(_))));
        assert!(matches!(decode_pgm(b"P"), Err(Error::Malformed(_))));
    }

    #[test]
    fn unsupported_formats() {
        assert!(matches!(
            decode_pgm(b"P2\n1 1\n255\n0"),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            decode_pgm(b"P5\n1 1\n1023\n\0\0"),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        let g = SignalGrid::filled(2, 2, 1.0);
        export_image(&g, &path).unwrap();
        assert_eq!(import_image(&path).unwrap(), g);
        assert!(export_image(&g, &dir.path().join("missing/a.pgm")).is_err());
    }
}
