//! Eight vertical Walsh–Hadamard stripe bases on an 8×8 grid and the
//! synthetic dataset `Σ αᵢ Bᵢ` with `αᵢ ~ U(−1, 1)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorio::{Batch, Image, RngStream};

pub const ORDER: usize = 8;
pub const SIDE: usize = 8;
/// Corpus size of the full synthetic experiment.
pub const DEFAULT_COUNT: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct HadamardBasis {
    /// 1-based, equal to sequency + 1.
    pub index: usize,
    pub image: Image,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoeffVector {
    pub alpha: [f64; ORDER],
    pub residual_norm: f64,
}

/// Rows of the Sylvester Hadamard matrix of order 8, as ±1.
fn sylvester_rows() -> [[i8; ORDER]; ORDER] {
    let mut h = [[0i8; ORDER]; ORDER];
    for (r, row) in h.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = if (r & c).count_ones() % 2 == 0 { 1 } else { -1 };
        }
    }
    h
}

pub fn sign_changes(row: &[i8]) -> usize {
    row.windows(2).filter(|p| p[0] != p[1]).count()
}

/// Walsh rows ordered by sequency (number of sign changes, 0..=7).
pub fn walsh_rows() -> [[i8; ORDER]; ORDER] {
    let mut rows = sylvester_rows();
    rows.sort_by_key(|r| sign_changes(r));
    rows
}

// Column profile of each basis, ±1/8; the basis is this profile copied down all rows.
fn profiles() -> [[f64; SIDE]; ORDER] {
    let scale = 1.0 / SIDE as f64;
    walsh_rows().map(|row| row.map(|s| f64::from(s) * scale))
}

pub fn hadamard_bases() -> [HadamardBasis; ORDER] {
    let profiles = profiles();
    std::array::from_fn(|i| {
        let data: Vec<f32> = (0..SIDE * SIDE)
            .map(|p| profiles[i][p % SIDE] as f32)
            .collect();
        HadamardBasis {
            index: i + 1,
            image: Image::new(SIDE, SIDE, data).unwrap(),
        }
    })
}

pub fn synthesize(coeffs: &[f64; ORDER]) -> Image {
    let profiles = profiles();
    let mut column = [0.0f64; SIDE];
    for (a, prof) in coeffs.iter().zip(profiles.iter()) {
        for (acc, b) in column.iter_mut().zip(prof) {
            *acc += a * b;
        }
    }
    let data: Vec<f32> = (0..SIDE * SIDE).map(|p| column[p % SIDE] as f32).collect();
    Image::new(SIDE, SIDE, data).expect("coefficients must be finite")
}

/// Orthonormal projection onto the eight bases plus the L2 norm of what is left.
pub fn fit(image: &Image) -> Result<CoeffVector> {
    if image.shape() != (SIDE, SIDE) {
        return Err(Error::Shape(format!(
            "hadamard fit needs an 8x8 image, got {}x{}",
            image.height(),
            image.width()
        )));
    }
    let profiles = profiles();
    let px = image.to_f64();
    let mut alpha = [0.0; ORDER];
    for (a, prof) in alpha.iter_mut().zip(profiles.iter()) {
        *a = px.iter().enumerate().map(|(p, v)| v * prof[p % SIDE]).sum();
    }
    let mut residual_sq = 0.0;
    for (p, v) in px.iter().enumerate() {
        let c = p % SIDE;
        let recon: f64 = alpha
            .iter()
            .zip(profiles.iter())
            .map(|(a, prof)| a * prof[c])
            .sum();
        residual_sq += (v - recon).powi(2);
    }
    Ok(CoeffVector {
        alpha,
        residual_norm: residual_sq.sqrt(),
    })
}

/// `count` images with i.i.d. U(−1, 1) coefficients; sample `k` draws from
/// `RngStream::new(seed, 0).derive(k)`.
pub fn gen_dataset(count: usize, seed: u64) -> Result<Batch> {
    if count == 0 {
        return Err(Error::Validation("dataset count must be at least 1".into()));
    }
    let base = RngStream::new(seed, 0);
    let images: Vec<Image> = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut s = base.derive(k as u64);
            let alpha: [f64; ORDER] = std::array::from_fn(|_| s.uniform_range(-1.0, 1.0));
            synthesize(&alpha)
        })
        .collect();
    Batch::new(images, seed)
}
