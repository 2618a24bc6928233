use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::Scalar;
use crate::error::{Error, Result};
use crate::tensorio::RngStream;

pub const LEAKY_SLOPE: f64 = 0.2;
pub const INIT_WEIGHT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// leaky ReLU with slope 0.2 for negative inputs
    LeakyRelu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::LeakyRelu => 0,
            Activation::Tanh => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::LeakyRelu),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }

    #[inline]
    fn apply<F: Scalar>(self, x: F) -> F {
        match self {
            Activation::LeakyRelu => {
                if x > F::zero() {
                    x
                } else {
                    x * F::of(LEAKY_SLOPE)
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    // derivative expressed through pre-activation and output
    #[inline]
    fn derivative<F: Scalar>(self, pre: F, out: F) -> F {
        match self {
            Activation::LeakyRelu => {
                if pre > F::zero() {
                    F::one()
                } else {
                    F::of(LEAKY_SLOPE)
                }
            }
            Activation::Tanh => F::one() - out * out,
            Activation::Identity => F::one(),
        }
    }
}

/// Row-major matrix; rows are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn data(&self) -> &[F] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [F] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    pub fn cast<G: Scalar>(&self) -> Matrix<G> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| G::of(v.f64())).collect(),
        }
    }
}

// Eight independent partial sums so the loop vectorises; fixed order keeps it deterministic.
#[inline]
fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    let mut acc = [F::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    let mut tail = F::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail = tail + *x * *y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

#[inline]
fn axpy<F: Scalar>(alpha: F, x: &[F], y: &mut [F]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * *xi;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub layers: Vec<LayerSpec>,
}

impl NetSpec {
    /// Chains `dims` with `hidden` on every layer except the last, which gets `output`.
    pub fn mlp(dims: &[usize], hidden: Activation, output: Activation) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|l| LayerSpec {
                in_dim: dims[l],
                out_dim: dims[l + 1],
                activation: if l + 1 == n { output } else { hidden },
            })
            .collect();
        Self { layers }
    }

    /// latent → 64 → 64 → 64 pixels, tanh head.
    pub fn generator(latent_dim: usize) -> Self {
        Self::mlp(
            &[latent_dim, 64, 64, 64],
            Activation::LeakyRelu,
            Activation::Tanh,
        )
    }

    /// 64 pixels → 64 → 64 → 1 logit.
    pub fn discriminator() -> Self {
        Self::mlp(
            &[64, 64, 64, 1],
            Activation::LeakyRelu,
            Activation::Identity,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.in_dim == 0 || layer.out_dim == 0 {
                return Err(Error::Shape(format!("layer {l} has a zero dimension")));
            }
        }
        for (l, pair) in self.layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Shape(format!(
                    "layer {l} outputs {} but layer {} expects {}",
                    pair[0].out_dim,
                    l + 1,
                    pair[1].in_dim
                )));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    pub spec: LayerSpec,
    /// out × in, row-major
    pub weights: Vec<F>,
    pub bias: Vec<F>,
}

static NET_IDS: AtomicU64 = AtomicU64::new(1);

fn next_id() -> u64 {
    NET_IDS.fetch_add(1, Ordering::Relaxed)
}

/// Feed-forward network. Each instance carries an identity and a revision that
/// bumps on every parameter update; caches from any other (id, revision) are refused.
#[derive(Debug)]
pub struct DenseNet<F> {
    layers: Vec<Dense<F>>,
    id: u64,
    revision: u64,
}

impl<F: Clone> Clone for DenseNet<F> {
    fn clone(&self) -> Self {
        Self {
            layers: self.layers.clone(),
            id: next_id(),
            revision: 0,
        }
    }
}

impl<F: PartialEq> PartialEq for DenseNet<F> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Activations retained by [`DenseNet::forward`] for the matching backward pass.
#[derive(Debug, Clone)]
pub struct Cache<F> {
    net_id: u64,
    revision: u64,
    /// layer inputs; `inputs[L]` is the network output
    inputs: Vec<Matrix<F>>,
    pre: Vec<Matrix<F>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    /// (d weights, d bias) per layer
    pub layers: Vec<(Vec<F>, Vec<F>)>,
}

impl<F: Scalar> Gradients<F> {
    pub fn zeros_like(net: &DenseNet<F>) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| {
                    (
                        vec![F::zero(); l.weights.len()],
                        vec![F::zero(); l.bias.len()],
                    )
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            w.iter_mut().zip(ow).for_each(|(x, y)| *x = *x + *y);
            b.iter_mut().zip(ob).for_each(|(x, y)| *x = *x + *y);
        }
    }

    /// Flattened view in parameter order (per layer: weights, then bias).
    pub fn flat(&self) -> Vec<F> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.iter().chain(b).all(|v| v.is_finite()))
    }
}

impl<F: Scalar> DenseNet<F> {
    pub fn from_layers(layers: Vec<Dense<F>>) -> Result<Self> {
        let spec = NetSpec {
            layers: layers.iter().map(|l| l.spec).collect(),
        };
        spec.validate()?;
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.spec.in_dim * l.spec.out_dim || l.bias.len() != l.spec.out_dim {
                return Err(Error::Shape(format!(
                    "layer {i} parameter sizes do not match its spec"
                )));
            }
            if !l.weights.iter().chain(&l.bias).all(|v| v.is_finite()) {
                return Err(Error::Validation(format!(
                    "layer {i} has non-finite parameters"
                )));
            }
        }
        Ok(Self {
            layers,
            id: next_id(),
            revision: 0,
        })
    }

    pub fn zeros(spec: &NetSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layers
            .iter()
            .map(|s| Dense {
                spec: *s,
                weights: vec![F::zero(); s.in_dim * s.out_dim],
                bias: vec![F::zero(); s.out_dim],
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn spec(&self) -> NetSpec {
        NetSpec {
            layers: self.layers.iter().map(|l| l.spec).collect(),
        }
    }

    pub fn layers(&self) -> &[Dense<F>] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].spec.out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Parameters in canonical order (per layer: weights, then bias).
    pub fn params(&self) -> impl Iterator<Item = &[F]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
    }

    /// Mutable access to every parameter tensor; invalidates outstanding caches.
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut [F]> {
        self.revision += 1;
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
    }

    pub fn flat_params(&self) -> Vec<F> {
        self.params().flat_map(|p| p.iter().copied()).collect()
    }

    pub fn cast<G: Scalar>(&self) -> DenseNet<G> {
        let layers = self
            .layers
            .iter()
            .map(|l| Dense {
                spec: l.spec,
                weights: l.weights.iter().map(|v| G::of(v.f64())).collect(),
                bias: l.bias.iter().map(|v| G::of(v.f64())).collect(),
            })
            .collect();
        DenseNet {
            layers,
            id: next_id(),
            revision: 0,
        }
    }

    pub fn forward(&self, x: &Matrix<F>) -> Result<(Matrix<F>, Cache<F>)> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "network expects {} inputs per row, got {}",
                self.input_dim(),
                x.cols()
            )));
        }
        let batch = x.rows();
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        inputs.push(x.clone());
        for layer in &self.layers {
            let (n_in, n_out) = (layer.spec.in_dim, layer.spec.out_dim);
            let input = inputs.last().unwrap();
            let mut z = Matrix::zeros(batch, n_out);
            for b in 0..batch {
                let xb = input.row(b);
                let zb = z.row_mut(b);
                for (o, zo) in zb.iter_mut().enumerate() {
                    *zo = layer.bias[o] + dot(&layer.weights[o * n_in..(o + 1) * n_in], xb);
                }
            }
            let act = layer.spec.activation;
            let a = Matrix {
                rows: batch,
                cols: n_out,
                data: z.data.iter().map(|&v| act.apply(v)).collect(),
            };
            pre.push(z);
            inputs.push(a);
        }
        let out = inputs.last().unwrap().clone();
        Ok((
            out,
            Cache {
                net_id: self.id,
                revision: self.revision,
                inputs,
                pre,
            },
        ))
    }

    /// Reverse pass for the scalar `(1/B) Σ_b ⟨upstream_b, out_b⟩`.
    ///
    /// Parameter gradients are averaged over the batch. Row `b` of the returned
    /// input gradient is `∂⟨upstream_b, out_b⟩ / ∂x_b` (per sample, not averaged).
    pub fn backward(
        &self,
        cache: &Cache<F>,
        upstream: &Matrix<F>,
    ) -> Result<(Gradients<F>, Matrix<F>)> {
        if cache.net_id != self.id || cache.revision != self.revision {
            return Err(Error::Contract(
                "cache does not come from the current parameters of this network".into(),
            ));
        }
        let batch = cache.inputs[0].rows();
        if upstream.rows() != batch || upstream.cols() != self.output_dim() {
            return Err(Error::Shape(format!(
                "upstream gradient is {}x{}, expected {}x{}",
                upstream.rows(),
                upstream.cols(),
                batch,
                self.output_dim()
            )));
        }
        let inv_b = F::of(1.0 / batch as f64);
        let mut grads = Gradients::zeros_like(self);
        let mut delta = upstream.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let (n_in, n_out) = (layer.spec.in_dim, layer.spec.out_dim);
            let act = layer.spec.activation;
            let (pre, out, input) = (&cache.pre[l], &cache.inputs[l + 1], &cache.inputs[l]);
            for (d, (&z, &a)) in delta.data.iter_mut().zip(pre.data.iter().zip(&out.data)) {
                *d = *d * act.derivative(z, a);
            }
            let (dw, db) = &mut grads.layers[l];
            let mut dx = Matrix::zeros(batch, n_in);
            for b in 0..batch {
                let db_row = delta.row(b);
                let xb = input.row(b);
                for o in 0..n_out {
                    let d = db_row[o];
                    if d == F::zero() {
                        continue;
                    }
                    db[o] = db[o] + d;
                    axpy(d, xb, &mut dw[o * n_in..(o + 1) * n_in]);
                    axpy(d, &layer.weights[o * n_in..(o + 1) * n_in], dx.row_mut(b));
                }
            }
            dw.iter_mut()
                .chain(db.iter_mut())
                .for_each(|g| *g = *g * inv_b);
            delta = dx;
        }
        Ok((grads, delta))
    }
}

/// Weights ~ N(0, 0.02²) drawn layer by layer in row-major order; biases zero.
pub fn init_net<F: Scalar>(spec: &NetSpec, stream: &mut RngStream) -> Result<DenseNet<F>> {
    spec.validate()?;
    let layers = spec
        .layers
        .iter()
        .map(|s| Dense {
            spec: *s,
            weights: (0..s.in_dim * s.out_dim)
                .map(|_| F::of(INIT_WEIGHT_STD * stream.gaussian()))
                .collect(),
            bias: vec![F::zero(); s.out_dim],
        })
        .collect();
    DenseNet::from_layers(layers)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(w: f64, b: f64, act: Activation) -> DenseNet<f64> {
        DenseNet::from_layers(vec![Dense {
            spec: LayerSpec {
                in_dim: 1,
                out_dim: 1,
                activation: act,
            },
            weights: vec![w],
            bias: vec![b],
        }])
        .unwrap()
    }

    #[test]
    fn affine_arithmetic() {
        let net = single(2.0, 1.0, Activation::Identity);
        let (y, _) = net
            .forward(&Matrix::from_vec(1, 1, vec![3.0]).unwrap())
            .unwrap();
        assert_eq!(y.data(), &[7.0]);
    }

    #[test]
    fn zero_net_gives_zero() {
        let net = DenseNet::<f64>::zeros(&NetSpec::discriminator()).unwrap();
        let x = Matrix::from_vec(2, 64, (0..128).map(|v| v as f64 * 0.01).collect()).unwrap();
        let (y, _) = net.forward(&x).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0]);
    }

    #[test]
    fn shape_mismatch() {
        let net = DenseNet::<f64>::zeros(&NetSpec::discriminator()).unwrap();
        assert!(matches!(
            net.forward(&Matrix::zeros(1, 63)),
            Err(Error::Shape(_))
        ));
        let bad = NetSpec {
            layers: vec![
                LayerSpec {
                    in_dim: 2,
                    out_dim: 3,
                    activation: Activation::Tanh,
                },
                LayerSpec {
                    in_dim: 4,
                    out_dim: 1,
                    activation: Activation::Tanh,
                },
            ],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn rows_are_independent() {
        let mut s = RngStream::new(3, 0);
        let net: DenseNet<f64> = init_net(&NetSpec::generator(16), &mut s).unwrap();
        let x = Matrix::from_vec(3, 16, (0..48).map(|_| s.gaussian()).collect()).unwrap();
        let (y, _) = net.forward(&x).unwrap();
        for b in 0..3 {
            let xb = Matrix::from_vec(1, 16, x.row(b).to_vec()).unwrap();
            let (yb, _) = net.forward(&xb).unwrap();
            assert_eq!(yb.row(0), y.row(b));
        }
    }

    #[test]
    fn leaky_slope_gradient() {
        let net = single(1.0, -5.0, Activation::LeakyRelu);
        let (_, cache) = net
            .forward(&Matrix::from_vec(1, 1, vec![1.0]).unwrap())
            .unwrap();
        let (g, dx) = net
            .backward(&cache, &Matrix::from_vec(1, 1, vec![1.0]).unwrap())
            .unwrap();
        assert_eq!(dx.data(), &[0.2]);
        assert_eq!(g.layers[0].0, vec![0.2]);
        assert_eq!(g.layers[0].1, vec![0.2]);
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let mut s = RngStream::new(4, 0);
        let net: DenseNet<f64> = init_net(&NetSpec::discriminator(), &mut s).unwrap();
        let x = Matrix::from_vec(2, 64, (0..128).map(|_| s.gaussian()).collect()).unwrap();
        let (_, cache) = net.forward(&x).unwrap();
        let (g, dx) = net.backward(&cache, &Matrix::zeros(2, 1)).unwrap();
        assert!(g.flat().iter().all(|&v| v == 0.0));
        assert!(dx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_cache_rejected() {
        let mut net = single(1.0, 0.0, Activation::Tanh);
        let x = Matrix::from_vec(1, 1, vec![0.5]).unwrap();
        let (_, cache) = net.forward(&x).unwrap();
        net.params_mut().for_each(|p| p[0] += 0.1);
        let up = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        assert!(matches!(net.backward(&cache, &up), Err(Error::Contract(_))));
        let other = single(1.0, 0.0, Activation::Tanh);
        let (_, c2) = other.forward(&x).unwrap();
        assert!(matches!(net.backward(&c2, &up), Err(Error::Contract(_))));
    }

    #[test]
    fn init_is_deterministic_with_zero_bias() {
        let spec = NetSpec::generator(16);
        let a: DenseNet<f32> = init_net(&spec, &mut RngStream::new(1, 2)).unwrap();
        let b: DenseNet<f32> = init_net(&spec, &mut RngStream::new(1, 2)).unwrap();
        assert_eq!(a, b);
        assert!(a.layers().iter().all(|l| l.bias.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn init_weight_std() {
        let spec = NetSpec::mlp(&[100, 1000], Activation::Identity, Activation::Identity);
        let net: DenseNet<f64> = init_net(&spec, &mut RngStream::new(77, 0)).unwrap();
        let w = &net.layers()[0].weights;
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let std = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((std / INIT_WEIGHT_STD - 1.0).abs() < 0.05, "std {std}");
    }
}
