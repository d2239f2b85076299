//! 8-bit grayscale images and binary PGM output.

use std::io::Write;

use crate::error::{Error, Result};

/// Min-max scales `values` to `0..=255`. A constant input maps to 128 everywhere.
pub fn to_gray8(values: &[f64]) -> Vec<u8> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![128; values.len()];
    }
    values.iter().map(|&x| ((x - lo) / (hi - lo) * 255.0).round() as u8).collect()
}

/// Writes a P5 image with maxval 255.
pub fn write_pgm<W: Write>(mut out: W, height: usize, width: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != height * width {
        return Err(Error::Dimension(format!("{} pixels for a {}x{} image", pixels.len(), height, width)));
    }
    write!(out, "P5\n{width} {height}\n255\n")?;
    out.write_all(pixels)?;
    Ok(())
}
