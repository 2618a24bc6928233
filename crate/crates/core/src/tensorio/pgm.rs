use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::image::Image;
use crate::error::{Error, Result};

/// Maps an intensity in [-1, 1] to an 8-bit grey level; out-of-range values clamp.
#[inline]
pub fn pgm_level(v: f32) -> u8 {
    let unit = ((f64::from(v) + 1.0) / 2.0).clamp(0.0, 1.0);
    (unit * 255.0).round() as u8
}

/// Writes a binary (P5) PGM with maxval 255.
pub fn export_pgm(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let file = File::create(path).map_err(io)?;
    let mut out = BufWriter::new(file);
    write!(out, "P5\n{} {}\n255\n", image.width(), image.height()).map_err(io)?;
    let bytes: Vec<u8> = image.data().iter().map(|&v| pgm_level(v)).collect();
    out.write_all(&bytes).map_err(io)?;
    out.flush().map_err(io)
}
