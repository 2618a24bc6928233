//! Scale-space (repeated smoothing), noise-space (repeated additive noise) and
//! noisy scale-space (smooth, then add noise, repeated) representations.
//!
//! All recursions run in f64 on a scratch buffer and round to f32 once at the
//! end. Noise draws are consumed step-major, then row-major over pixels, so a
//! cloned stream replays exactly the draws a filter used.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorio::{gaussian_draw, Batch, Image, RngStream};

/// Per-step noise std used throughout the experiments.
pub const DEFAULT_SIGMA: f64 = 0.15;
/// Initial filter time of the annealing schedule.
pub const DEFAULT_T0: u32 = 256;
/// Decay power of the annealing schedule.
pub const DEFAULT_BETA: f64 = 20.0;

/// 3×3 smoothing kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    weights: [[f64; 3]; 3],
}

impl Kernel {
    pub fn new(weights: [[f64; 3]; 3]) -> Result<Self> {
        let sum: f64 = weights.iter().flatten().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "kernel weights sum to {sum}, expected 1"
            )));
        }
        let symmetric = (0..3).all(|r| {
            (0..3).all(|c| weights[r][c] == weights[r][2 - c] && weights[r][c] == weights[2 - r][c])
        });
        if !symmetric {
            return Err(Error::Domain("kernel must be flip-symmetric".into()));
        }
        Ok(Self { weights })
    }

    #[inline]
    pub fn weights(&self) -> &[[f64; 3]; 3] {
        &self.weights
    }
}

impl Default for Kernel {
    fn default() -> Self {
        gaussian_kernel3()
    }
}

/// Normalised binomial kernel `(1,2,1)ᵀ(1,2,1) / 16`.
pub fn gaussian_kernel3() -> Kernel {
    let b = [1.0, 2.0, 1.0];
    let mut weights = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            weights[r][c] = b[r] * b[c] / 16.0;
        }
    }
    Kernel { weights }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    /// scale-space
    Ss,
    /// noise-space
    Ns,
    /// noisy scale-space
    Nss,
    None,
}

impl FilterKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FilterKind::Ss => "ss",
            FilterKind::Ns => "ns",
            FilterKind::Nss => "nss",
            FilterKind::None => "none",
        }
    }
}

impl std::fmt::Display for FilterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ss" => Ok(FilterKind::Ss),
            "ns" => Ok(FilterKind::Ns),
            "nss" => Ok(FilterKind::Nss),
            "none" => Ok(FilterKind::None),
            other => Err(Error::Domain(format!("unknown filter kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub t: u32,
    pub sigma: f64,
    pub kernel: Kernel,
}

impl FilterSpec {
    pub fn new(kind: FilterKind, t: u32, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Domain(format!(
                "sigma must be finite and >= 0, got {sigma}"
            )));
        }
        Ok(Self {
            kind,
            t,
            sigma,
            kernel: gaussian_kernel3(),
        })
    }

    pub fn identity() -> Self {
        Self {
            kind: FilterKind::None,
            t: 0,
            sigma: 0.0,
            kernel: gaussian_kernel3(),
        }
    }

    #[inline]
    pub fn is_identity(&self) -> bool {
        self.kind == FilterKind::None || self.t == 0
    }

    /// Filters one image, drawing noise from `stream` where the kind needs it.
    pub fn apply(&self, image: &Image, stream: &mut RngStream) -> Image {
        if self.is_identity() {
            return image.clone();
        }
        let (h, w) = image.shape();
        finish(h, w, &self.apply_values(image.to_f64(), h, w, stream))
    }

    /// Same as [`apply`](Self::apply) on a raw row-major f64 buffer, without
    /// rounding to f32.
    pub fn apply_values(
        &self,
        values: Vec<f64>,
        h: usize,
        w: usize,
        stream: &mut RngStream,
    ) -> Vec<f64> {
        debug_assert_eq!(values.len(), h * w);
        match self.kind {
            _ if self.is_identity() => values,
            FilterKind::Ss => smooth_values(values, h, w, self.t, &self.kernel),
            FilterKind::Ns => noise_values(values, self.t, self.sigma, stream),
            FilterKind::Nss => {
                noisy_smooth_values(values, h, w, self.t, self.sigma, &self.kernel, stream)
            }
            FilterKind::None => unreachable!(),
        }
    }

    /// Applies the adjoint of the filter's Jacobian to a gradient image.
    ///
    /// The noise terms do not depend on the input, so the Jacobian of every
    /// representation is `t` convolutions (or the identity for noise-space).
    pub fn backprop(&self, grad: &[f64], height: usize, width: usize) -> Vec<f64> {
        if self.is_identity() || self.kind == FilterKind::Ns {
            return grad.to_vec();
        }
        let mut cur = grad.to_vec();
        let mut next = vec![0.0; cur.len()];
        for _ in 0..self.t {
            convolve_adjoint_into(&cur, height, width, &self.kernel, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    /// initial time t(0)
    pub t0: u32,
    pub beta: f64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self {
            t0: DEFAULT_T0,
            beta: DEFAULT_BETA,
        }
    }
}

/// `round(T · exp(−β·i))` for relative iteration `i ∈ [0, 1]`.
pub fn anneal_t(i: f64, schedule: &AnnealSchedule) -> Result<u32> {
    if !(0.0..=1.0).contains(&i) {
        return Err(Error::Domain(format!(
            "relative iteration {i} outside [0, 1]"
        )));
    }
    if !(schedule.beta > 0.0 && schedule.beta.is_finite()) {
        return Err(Error::Domain(format!(
            "beta must be positive, got {}",
            schedule.beta
        )));
    }
    let t = f64::from(schedule.t0) * (-schedule.beta * i).exp();
    Ok(t.round().max(0.0) as u32)
}

// Replicate-boundary 3×3 convolution on a row-major f64 buffer.
pub(crate) fn convolve_into(src: &[f64], h: usize, w: usize, kernel: &Kernel, dst: &mut [f64]) {
    debug_assert_eq!(src.len(), h * w);
    let k = kernel.weights();
    for r in 0..h {
        let rows = [r.saturating_sub(1), r, (r + 1).min(h - 1)];
        for c in 0..w {
            let cols = [c.saturating_sub(1), c, (c + 1).min(w - 1)];
            let mut acc = 0.0;
            for (kr, &rr) in rows.iter().enumerate() {
                let row = &src[rr * w..rr * w + w];
                for (kc, &cc) in cols.iter().enumerate() {
                    acc += k[kr][kc] * row[cc];
                }
            }
            dst[r * w + c] = acc;
        }
    }
}

// Transpose of `convolve_into`: every tap scatters back to the clamped pixel it read.
pub(crate) fn convolve_adjoint_into(
    src: &[f64],
    h: usize,
    w: usize,
    kernel: &Kernel,
    dst: &mut [f64],
) {
    let k = kernel.weights();
    dst.iter_mut().for_each(|v| *v = 0.0);
    for r in 0..h {
        let rows = [r.saturating_sub(1), r, (r + 1).min(h - 1)];
        for c in 0..w {
            let cols = [c.saturating_sub(1), c, (c + 1).min(w - 1)];
            let g = src[r * w + c];
            for (kr, &rr) in rows.iter().enumerate() {
                for (kc, &cc) in cols.iter().enumerate() {
                    dst[rr * w + cc] += k[kr][kc] * g;
                }
            }
        }
    }
}

pub fn convolve(image: &Image, kernel: &Kernel) -> Image {
    scale_space_with(image, 1, kernel)
}

pub fn scale_space(image: &Image, t: u32) -> Image {
    scale_space_with(image, t, &gaussian_kernel3())
}

pub fn scale_space_with(image: &Image, t: u32, kernel: &Kernel) -> Image {
    if t == 0 {
        return image.clone();
    }
    let (h, w) = image.shape();
    finish(h, w, &smooth_values(image.to_f64(), h, w, t, kernel))
}

pub fn noise_space(image: &Image, t: u32, sigma: f64, stream: &mut RngStream) -> Image {
    if t == 0 {
        return image.clone();
    }
    let (h, w) = image.shape();
    finish(h, w, &noise_values(image.to_f64(), t, sigma, stream))
}

pub fn noisy_scale_space(image: &Image, t: u32, sigma: f64, stream: &mut RngStream) -> Image {
    noisy_scale_space_with(image, t, sigma, &gaussian_kernel3(), stream)
}

pub fn noisy_scale_space_with(
    image: &Image,
    t: u32,
    sigma: f64,
    kernel: &Kernel,
    stream: &mut RngStream,
) -> Image {
    if t == 0 {
        return image.clone();
    }
    let (h, w) = image.shape();
    finish(
        h,
        w,
        &noisy_smooth_values(image.to_f64(), h, w, t, sigma, kernel, stream),
    )
}

fn smooth_values(mut cur: Vec<f64>, h: usize, w: usize, t: u32, kernel: &Kernel) -> Vec<f64> {
    let mut next = vec![0.0; cur.len()];
    for _ in 0..t {
        convolve_into(&cur, h, w, kernel, &mut next);
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

fn noise_values(mut cur: Vec<f64>, t: u32, sigma: f64, stream: &mut RngStream) -> Vec<f64> {
    for _ in 0..t {
        for v in cur.iter_mut() {
            *v += sigma * gaussian_draw(stream);
        }
    }
    cur
}

fn noisy_smooth_values(
    mut cur: Vec<f64>,
    h: usize,
    w: usize,
    t: u32,
    sigma: f64,
    kernel: &Kernel,
    stream: &mut RngStream,
) -> Vec<f64> {
    if sigma == 0.0 {
        return smooth_values(cur, h, w, t, kernel);
    }
    let mut next = vec![0.0; cur.len()];
    for _ in 0..t {
        convolve_into(&cur, h, w, kernel, &mut next);
        for v in next.iter_mut() {
            *v += sigma * gaussian_draw(stream);
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

fn finish(h: usize, w: usize, values: &[f64]) -> Image {
    Image::from_f64(h, w, values).expect("filter output is finite and correctly shaped")
}

/// Filters every image of `batch` with its own stream `base.derive(index)`.
///
/// Output depends only on `(spec, base, index)` per image, never on thread count.
pub fn apply_filter(batch: &Batch, spec: &FilterSpec, base: &RngStream) -> Batch {
    if spec.is_identity() {
        return batch.clone();
    }
    let images: Vec<Image> = batch
        .images()
        .par_iter()
        .enumerate()
        .map(|(i, img)| spec.apply(img, &mut base.derive(i as u64)))
        .collect();
    Batch::new(images, batch.origin_seed()).expect("filtering preserves batch shape")
}
