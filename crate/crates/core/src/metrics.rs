//! Batch diagnostics: pooled pixel variance, Hadamard coefficient statistics
//! and a Fréchet distance between coefficient Gaussians.
//!
//! Sums are taken over values sorted by `total_cmp` with Neumaier compensation,
//! so every statistic is bit-identical under any reordering of the batch.

#![allow(clippy::needless_range_loop)]

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hadamard::{fit, ORDER};
use crate::scalespace::{apply_filter, FilterKind, FilterSpec};
use crate::tensorio::{Batch, RngStream};

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-8;

fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Order-independent mean and population variance.
fn sorted_moments(mut values: Vec<f64>) -> (f64, f64) {
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = neumaier_sum(values.iter().copied()) / n;
    let var = neumaier_sum(values.iter().map(|v| (v - mean) * (v - mean))) / n;
    (mean, var)
}

fn sorted_sum(mut values: Vec<f64>) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    neumaier_sum(values)
}

/// Population variance of all pixel values of all images.
pub fn pooled_variance(batch: &Batch) -> f64 {
    let values: Vec<f64> = batch
        .iter()
        .flat_map(|img| img.data().iter().map(|&v| f64::from(v)))
        .collect();
    sorted_moments(values).1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceCurve {
    pub kind: FilterKind,
    /// (t, pooled variance), t ascending
    pub points: Vec<(u32, f64)>,
}

/// Pooled variance of `batch` filtered afresh at every `t`; the filter at time `t`
/// draws from `RngStream::new(seed, 0).derive(t)`.
pub fn variance_curve(
    batch: &Batch,
    kind: FilterKind,
    sigma: f64,
    t_values: &[u32],
    seed: u64,
) -> Result<VarianceCurve> {
    if t_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("t values must be strictly ascending".into()));
    }
    let base = RngStream::new(seed, 0);
    let points = t_values
        .iter()
        .map(|&t| {
            let spec = FilterSpec::new(kind, t, sigma)?;
            let filtered = apply_filter(batch, &spec, &base.derive(u64::from(t)));
            Ok((t, pooled_variance(&filtered)))
        })
        .collect::<Result<_>>()?;
    Ok(VarianceCurve { kind, points })
}

/// Moments of fitted Hadamard coefficients over a batch (population moments).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffStats {
    pub mean: [f64; ORDER],
    pub std: [f64; ORDER],
    pub cov: [[f64; ORDER]; ORDER],
    pub mean_residual: f64,
    pub count: usize,
}

pub fn coeff_stats(batch: &Batch) -> Result<CoeffStats> {
    let fits = batch.iter().map(fit).collect::<Result<Vec<_>>>()?;
    let n = fits.len();
    let mut mean = [0.0; ORDER];
    for (i, m) in mean.iter_mut().enumerate() {
        *m = sorted_moments(fits.iter().map(|f| f.alpha[i]).collect()).0;
    }
    let mut cov = [[0.0; ORDER]; ORDER];
    for i in 0..ORDER {
        for j in i..ORDER {
            let c = sorted_sum(
                fits.iter()
                    .map(|f| (f.alpha[i] - mean[i]) * (f.alpha[j] - mean[j]))
                    .collect(),
            ) / n as f64;
            cov[i][j] = c;
            cov[j][i] = c;
        }
    }
    let std = std::array::from_fn(|i| cov[i][i].max(0.0).sqrt());
    let mean_residual = sorted_sum(fits.iter().map(|f| f.residual_norm).collect()) / n as f64;
    Ok(CoeffStats {
        mean,
        std,
        cov,
        mean_residual,
        count: n,
    })
}

/// Per-basis `std_a / std_b`.
pub fn std_ratio(a: &CoeffStats, b: &CoeffStats) -> [f64; ORDER] {
    std::array::from_fn(|i| a.std[i] / b.std[i])
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix: (eigenvalues, eigenvectors as columns).
pub fn jacobi_eigen<const N: usize>(m: &[[f64; N]; N]) -> ([f64; N], [[f64; N]; N]) {
    let mut a = *m;
    let mut v = [[0.0; N]; N];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let frob = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    let off_norm = |a: &[[f64; N]; N]| {
        let mut s = 0.0;
        for i in 0..N {
            for j in 0..N {
                if i != j {
                    s += a[i][j] * a[i][j];
                }
            }
        }
        s.sqrt()
    };
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_norm(&a) <= JACOBI_TOL * frob {
            break;
        }
        for p in 0..N {
            for q in p + 1..N {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..N {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..N {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    (std::array::from_fn(|i| a[i][i]), v)
}

/// Principal square root of a symmetric PSD matrix; negative eigenvalues clamp to 0.
pub fn sym_psd_sqrt<const N: usize>(m: &[[f64; N]; N]) -> Result<[[f64; N]; N]> {
    let scale = m.iter().flatten().fold(1.0f64, |acc, x| acc.max(x.abs()));
    for i in 0..N {
        for j in i + 1..N {
            if (m[i][j] - m[j][i]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::Domain(format!(
                    "matrix is not symmetric at ({i}, {j}): {} vs {}",
                    m[i][j], m[j][i]
                )));
            }
        }
    }
    if m.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    let (vals, vecs) = jacobi_eigen(m);
    let roots = vals.map(|l| l.max(0.0).sqrt());
    let mut out = [[0.0; N]; N];
    for i in 0..N {
        for j in i..N {
            let s: f64 = (0..N).map(|k| vecs[i][k] * roots[k] * vecs[j][k]).sum();
            out[i][j] = s;
            out[j][i] = s;
        }
    }
    Ok(out)
}

fn matmul<const N: usize>(a: &[[f64; N]; N], b: &[[f64; N]; N]) -> [[f64; N]; N] {
    let mut out = [[0.0; N]; N];
    for i in 0..N {
        for k in 0..N {
            let aik = a[i][k];
            for j in 0..N {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

fn symmetrize<const N: usize>(m: &mut [[f64; N]; N]) {
    for i in 0..N {
        for j in i + 1..N {
            let avg = 0.5 * (m[i][j] + m[j][i]);
            m[i][j] = avg;
            m[j][i] = avg;
        }
    }
}

/// Fréchet distance between N(μ_a, Σ_a) and N(μ_b, Σ_b):
/// `‖μ_a − μ_b‖² + tr(Σ_a + Σ_b − 2 (Σ_a^½ Σ_b Σ_a^½)^½)`.
pub fn frechet_gaussian<const N: usize>(
    mu_a: &[f64; N],
    cov_a: &[[f64; N]; N],
    mu_b: &[f64; N],
    cov_b: &[[f64; N]; N],
) -> Result<f64> {
    let mean_term: f64 = mu_a.iter().zip(mu_b).map(|(a, b)| (a - b) * (a - b)).sum();
    let sa = sym_psd_sqrt(cov_a)?;
    let mut inner = matmul(&matmul(&sa, cov_b), &sa);
    symmetrize(&mut inner);
    let cross = sym_psd_sqrt(&inner)?;
    let trace = |m: &[[f64; N]; N]| (0..N).map(|i| m[i][i]).sum::<f64>();
    let d = mean_term + trace(cov_a) + trace(cov_b) - 2.0 * trace(&cross);
    Ok(d.max(0.0))
}

pub fn coeff_frechet(a: &CoeffStats, b: &CoeffStats) -> Result<f64> {
    frechet_gaussian(&a.mean, &a.cov, &b.mean, &b.cov)
}
