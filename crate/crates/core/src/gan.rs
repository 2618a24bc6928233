//! GAN objectives and the filtered training loop.
//!
//! Each mini-batch step updates the discriminator once and then the generator
//! once. The projection Φ_t (one of the scale-space representations) is applied
//! to the first half of the real batch and the first half of the fake batch,
//! with the same `t` for both; the generator receives gradients through Φ_t.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hadamard::SIDE;
use crate::nn::{
    adam_step, init_net, AdamState, Checkpoint, DenseNet, Gradients, Matrix, NetSpec,
    OptimizerConfig, Scalar,
};
use crate::scalespace::{anneal_t, AnnealSchedule, FilterKind, FilterSpec, DEFAULT_SIGMA};
use crate::tensorio::{Batch, Image, RngStream};

pub const DEFAULT_LATENT_DIM: usize = 16;
pub const DEFAULT_BATCH_SIZE: usize = 128;

// stream-derivation tags
const TAG_INIT: u64 = 1;
const TAG_SHUFFLE: u64 = 2;
const TAG_LATENT: u64 = 3;
const TAG_FILTER_REAL: u64 = 4;
const TAG_FILTER_FAKE: u64 = 5;

#[inline]
fn log_sigmoid(x: f64) -> f64 {
    // log σ(x) = −softplus(−x)
    -((-x).max(0.0) + (-x.abs()).exp().ln_1p())
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Discriminator objective and its per-sample logit derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorObjective {
    /// mean log σ(real) + mean log(1 − σ(fake)); at most 0
    pub value: f64,
    pub grad_real: Vec<f64>,
    pub grad_fake: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorObjective {
    pub value: f64,
    pub grad_fake: Vec<f64>,
}

/// `grad_*[k]` is the derivative of sample `k`'s own term, not of the mean.
pub fn d_objective(real_logits: &[f64], fake_logits: &[f64]) -> DiscriminatorObjective {
    let mean = |v: &[f64], f: fn(f64) -> f64| v.iter().map(|&x| f(x)).sum::<f64>() / v.len() as f64;
    let value = mean(real_logits, log_sigmoid) + mean(fake_logits, |x| log_sigmoid(-x));
    DiscriminatorObjective {
        value,
        grad_real: real_logits.iter().map(|&x| sigmoid(-x)).collect(),
        grad_fake: fake_logits.iter().map(|&x| -sigmoid(x)).collect(),
    }
}

/// Non-saturating generator loss, mean of −log σ(fake); the generator minimises it.
pub fn g_objective_nonsat(fake_logits: &[f64]) -> GeneratorObjective {
    let n = fake_logits.len() as f64;
    GeneratorObjective {
        value: fake_logits.iter().map(|&x| -log_sigmoid(x)).sum::<f64>() / n,
        grad_fake: fake_logits.iter().map(|&x| sigmoid(x) - 1.0).collect(),
    }
}

/// The min-max generator term, mean of log(1 − σ(fake)); kept for comparison.
pub fn g_objective_saturating(fake_logits: &[f64]) -> GeneratorObjective {
    let n = fake_logits.len() as f64;
    GeneratorObjective {
        value: fake_logits.iter().map(|&x| log_sigmoid(-x)).sum::<f64>() / n,
        grad_fake: fake_logits.iter().map(|&x| -sigmoid(x)).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeSchedule {
    Fixed(u32),
    Anneal(AnnealSchedule),
}

impl TimeSchedule {
    pub fn at(&self, i: f64) -> Result<u32> {
        match self {
            TimeSchedule::Fixed(t) => Ok(*t),
            TimeSchedule::Anneal(s) => anneal_t(i, s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub latent_dim: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
    pub filter: FilterKind,
    pub sigma: f64,
    pub schedule: TimeSchedule,
    pub seed: u64,
    pub half_batch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            latent_dim: DEFAULT_LATENT_DIM,
            batch_size: DEFAULT_BATCH_SIZE,
            epochs: 30,
            optimizer: OptimizerConfig::default(),
            filter: FilterKind::Nss,
            sigma: DEFAULT_SIGMA,
            schedule: TimeSchedule::Anneal(AnnealSchedule::default()),
            seed: 0,
            half_batch: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::Domain("latent_dim must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Domain("batch_size must be positive".into()));
        }
        if self.half_batch && self.batch_size < 2 {
            return Err(Error::Domain(
                "half-batch filtering needs batch_size >= 2".into(),
            ));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Domain(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        if let TimeSchedule::Anneal(s) = &self.schedule {
            if !(s.beta > 0.0 && s.beta.is_finite()) {
                return Err(Error::Domain(format!(
                    "beta must be positive, got {}",
                    s.beta
                )));
            }
        }
        self.optimizer.validate()
    }

    pub fn filter_at(&self, t: u32) -> FilterSpec {
        FilterSpec::new(self.filter, t, self.sigma).expect("sigma validated")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// relative iteration in [0, 1)
    pub i: f64,
    pub t: u32,
    pub d_obj: f64,
    pub g_obj: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<StepRecord>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub checkpoint: Checkpoint,
    pub history: TrainHistory,
}

/// Number of leading rows of an `n`-row batch that go through Φ.
#[inline]
pub fn filtered_rows(n: usize, half_batch: bool) -> usize {
    if half_batch {
        n / 2
    } else {
        n
    }
}

/// Applies `spec` to the first `count` rows; row `r` uses `base.derive(r)`.
pub fn filter_rows<F: Scalar>(
    m: &Matrix<F>,
    count: usize,
    spec: &FilterSpec,
    base: &RngStream,
) -> Matrix<F> {
    if spec.is_identity() || count == 0 {
        return m.clone();
    }
    debug_assert_eq!(m.cols(), SIDE * SIDE);
    let filtered: Vec<Vec<F>> = (0..count)
        .into_par_iter()
        .map(|r| {
            let vals: Vec<f64> = m.row(r).iter().map(|v| v.f64()).collect();
            spec.apply_values(vals, SIDE, SIDE, &mut base.derive(r as u64))
                .into_iter()
                .map(F::of)
                .collect()
        })
        .collect();
    let mut out = m.clone();
    for (r, row) in filtered.into_iter().enumerate() {
        out.row_mut(r).copy_from_slice(&row);
    }
    out
}

fn backprop_rows<F: Scalar>(grad: &mut Matrix<F>, count: usize, spec: &FilterSpec) {
    if spec.is_identity() || spec.kind == FilterKind::Ns {
        return;
    }
    for r in 0..count {
        let g: Vec<f64> = grad.row(r).iter().map(|v| v.f64()).collect();
        let back = spec.backprop(&g, SIDE, SIDE);
        for (dst, v) in grad.row_mut(r).iter_mut().zip(back) {
            *dst = F::of(v);
        }
    }
}

fn logits<F: Scalar>(m: &Matrix<F>) -> Vec<f64> {
    m.data().iter().map(|v| v.f64()).collect()
}

fn column<F: Scalar>(v: &[f64]) -> Matrix<F> {
    Matrix::from_vec(v.len(), 1, v.iter().map(|&x| F::of(x)).collect()).unwrap()
}

/// Discriminator half of a step: value of the objective on (already filtered)
/// reals and fakes, and the parameter gradient of its negation.
pub fn discriminator_pass<F: Scalar>(
    d: &DenseNet<F>,
    reals: &Matrix<F>,
    fakes: &Matrix<F>,
) -> Result<(f64, Gradients<F>)> {
    let (r_out, r_cache) = d.forward(reals)?;
    let (f_out, f_cache) = d.forward(fakes)?;
    let obj = d_objective(&logits(&r_out), &logits(&f_out));
    let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
    let (mut grads, _) = d.backward(&r_cache, &column(&neg(&obj.grad_real)))?;
    let (g_fake, _) = d.backward(&f_cache, &column(&neg(&obj.grad_fake)))?;
    grads.add_assign(&g_fake);
    Ok((obj.value, grads))
}

/// Generator half of a step: fakes `G(z)` pass through Φ on their first
/// `filtered` rows (noise from `fake_base`) and then through `d`.
/// Returns the non-saturating loss and its gradient w.r.t. the generator.
pub fn generator_pass<F: Scalar>(
    g: &DenseNet<F>,
    d: &DenseNet<F>,
    z: &Matrix<F>,
    spec: &FilterSpec,
    filtered: usize,
    fake_base: &RngStream,
) -> Result<(f64, Gradients<F>)> {
    let (fakes, g_cache) = g.forward(z)?;
    let projected = filter_rows(&fakes, filtered, spec, fake_base);
    let (out, d_cache) = d.forward(&projected)?;
    let obj = g_objective_nonsat(&logits(&out));
    let (_, mut dx) = d.backward(&d_cache, &column(&obj.grad_fake))?;
    backprop_rows(&mut dx, filtered, spec);
    let (grads, _) = g.backward(&g_cache, &dx)?;
    Ok((obj.value, grads))
}

fn latent_batch<F: Scalar>(base: &RngStream, rows: usize, dim: usize) -> Matrix<F> {
    let data: Vec<F> = (0..rows)
        .flat_map(|r| {
            let mut s = base.derive(r as u64);
            (0..dim)
                .map(move |_| F::of(s.gaussian()))
                .collect::<Vec<_>>()
        })
        .collect();
    Matrix::from_vec(rows, dim, data).unwrap()
}

fn batch_matrix(dataset: &Batch, indices: &[usize]) -> Matrix<f32> {
    let pixels = dataset.pixels_per_image();
    let mut data = Vec::with_capacity(indices.len() * pixels);
    for &k in indices {
        data.extend_from_slice(dataset.images()[k].data());
    }
    Matrix::from_vec(indices.len(), pixels, data).unwrap()
}

/// Freshly initialised generator/discriminator pair for `cfg`.
pub fn initial_checkpoint(cfg: &TrainConfig) -> Result<Checkpoint> {
    let base = RngStream::new(cfg.seed, 0);
    let generator = init_net(
        &NetSpec::generator(cfg.latent_dim),
        &mut base.derive_path(&[TAG_INIT, 0]),
    )?;
    let discriminator = init_net(
        &NetSpec::discriminator(),
        &mut base.derive_path(&[TAG_INIT, 1]),
    )?;
    Ok(Checkpoint {
        generator,
        discriminator,
        latent_dim: cfg.latent_dim,
        step: 0,
    })
}

pub fn train(cfg: &TrainConfig, dataset: &Batch) -> Result<TrainOutput> {
    train_with_observer(cfg, dataset, |_| {})
}

/// [`train`] with a callback after every step (progress reporting).
pub fn train_with_observer(
    cfg: &TrainConfig,
    dataset: &Batch,
    mut observer: impl FnMut(&StepRecord),
) -> Result<TrainOutput> {
    let mut trainer = Trainer::new(cfg.clone(), dataset)?;
    let mut history = TrainHistory::default();
    for epoch in 0..cfg.epochs {
        for indices in trainer.epoch_batches(epoch) {
            let rec = trainer.step(&indices)?;
            observer(&rec);
            history.records.push(rec);
        }
    }
    Ok(TrainOutput {
        checkpoint: trainer.into_checkpoint(),
        history,
    })
}

/// Everything one optimisation step consumes, fixed before either update runs.
#[derive(Debug, Clone)]
pub struct StepInputs {
    pub step: usize,
    pub i: f64,
    pub t: u32,
    pub spec: FilterSpec,
    /// real mini-batch with Φ applied to its leading rows
    pub reals: Matrix<f32>,
    pub z: Matrix<f32>,
    pub fake_noise: RngStream,
    pub filtered: usize,
}

/// Training state: both networks, their Adam moments and the step counter.
pub struct Trainer<'a> {
    cfg: TrainConfig,
    dataset: &'a Batch,
    ckpt: Checkpoint,
    g_state: AdamState<f32>,
    d_state: AdamState<f32>,
    base: RngStream,
    batch: usize,
    total_steps: usize,
    step: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: TrainConfig, dataset: &'a Batch) -> Result<Self> {
        cfg.validate()?;
        if dataset.shape() != (SIDE, SIDE) {
            return Err(Error::Shape(format!(
                "training expects 8x8 images, dataset has {}x{}",
                dataset.shape().0,
                dataset.shape().1
            )));
        }
        let batch = cfg.batch_size.min(dataset.len());
        if cfg.half_batch && batch < 2 {
            return Err(Error::Domain(
                "half-batch filtering needs at least 2 samples".into(),
            ));
        }
        let ckpt = initial_checkpoint(&cfg)?;
        Ok(Self {
            g_state: AdamState::new(&ckpt.generator),
            d_state: AdamState::new(&ckpt.discriminator),
            base: RngStream::new(cfg.seed, 0),
            total_steps: cfg.epochs * (dataset.len() / batch),
            step: 0,
            batch,
            cfg,
            dataset,
            ckpt,
        })
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.ckpt
    }

    pub fn into_checkpoint(mut self) -> Checkpoint {
        self.ckpt.step = self.step as u64;
        self.ckpt
    }

    pub fn batch_size(&self) -> usize {
        self.batch
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    /// Shuffled, full-size mini-batches of one epoch (a trailing remainder is dropped).
    pub fn epoch_batches(&self, epoch: usize) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.dataset.len()).collect();
        self.base
            .derive_path(&[TAG_SHUFFLE, epoch as u64])
            .shuffle(&mut order);
        order
            .chunks_exact(self.batch)
            .map(<[usize]>::to_vec)
            .collect()
    }

    /// Draws latents, noise streams and the filtered real batch for the next step.
    pub fn prepare(&self, indices: &[usize]) -> Result<StepInputs> {
        let step = self.step;
        let i = if self.total_steps == 0 {
            0.0
        } else {
            step as f64 / self.total_steps as f64
        };
        let t = match self.cfg.filter {
            FilterKind::None => 0,
            _ => self.cfg.schedule.at(i.min(1.0))?,
        };
        let spec = self.cfg.filter_at(t);
        let filtered = filtered_rows(indices.len(), self.cfg.half_batch);
        let reals = batch_matrix(self.dataset, indices);
        let reals = filter_rows(
            &reals,
            filtered,
            &spec,
            &self.base.derive_path(&[TAG_FILTER_REAL, step as u64]),
        );
        let z = latent_batch(
            &self.base.derive_path(&[TAG_LATENT, step as u64]),
            indices.len(),
            self.cfg.latent_dim,
        );
        Ok(StepInputs {
            step,
            i,
            t,
            spec,
            reals,
            z,
            fake_noise: self.base.derive_path(&[TAG_FILTER_FAKE, step as u64]),
            filtered,
        })
    }

    /// Discriminator update against detached, filtered fakes. Returns the D objective.
    pub fn d_step(&mut self, inp: &StepInputs) -> Result<f64> {
        let diverged = |detail: String| Error::Diverged {
            step: inp.step,
            t: inp.t,
            detail,
        };
        let (fakes, _) = self.ckpt.generator.forward(&inp.z)?;
        let fakes = filter_rows(&fakes, inp.filtered, &inp.spec, &inp.fake_noise);
        let (d_obj, grads) = discriminator_pass(&self.ckpt.discriminator, &inp.reals, &fakes)?;
        if !d_obj.is_finite() {
            return Err(diverged(format!("D objective {d_obj}")));
        }
        adam_step(
            &mut self.ckpt.discriminator,
            &grads,
            &mut self.d_state,
            &self.cfg.optimizer,
        )
        .map_err(|e| diverged(e.to_string()))?;
        Ok(d_obj)
    }

    /// Generator update through Φ and the current discriminator. Returns the G objective.
    pub fn g_step(&mut self, inp: &StepInputs) -> Result<f64> {
        let diverged = |detail: String| Error::Diverged {
            step: inp.step,
            t: inp.t,
            detail,
        };
        let (g_obj, grads) = generator_pass(
            &self.ckpt.generator,
            &self.ckpt.discriminator,
            &inp.z,
            &inp.spec,
            inp.filtered,
            &inp.fake_noise,
        )?;
        if !g_obj.is_finite() {
            return Err(diverged(format!("G objective {g_obj}")));
        }
        adam_step(
            &mut self.ckpt.generator,
            &grads,
            &mut self.g_state,
            &self.cfg.optimizer,
        )
        .map_err(|e| diverged(e.to_string()))?;
        Ok(g_obj)
    }

    /// One D update followed by one G update on the same latents and noise.
    pub fn step(&mut self, indices: &[usize]) -> Result<StepRecord> {
        let inp = self.prepare(indices)?;
        let d_obj = self.d_step(&inp)?;
        let g_obj = self.g_step(&inp)?;
        self.step += 1;
        Ok(StepRecord {
            step: inp.step,
            i: inp.i,
            t: inp.t,
            d_obj,
            g_obj,
        })
    }
}

/// `n` fakes `G(z)` with `z ~ N(0, I)`; sample `k` draws from `RngStream::new(seed, 0).derive(k)`.
pub fn generate(ckpt: &Checkpoint, n: usize, seed: u64) -> Result<Batch> {
    if n == 0 {
        return Err(Error::Validation("cannot generate an empty batch".into()));
    }
    let g = &ckpt.generator;
    if g.input_dim() != ckpt.latent_dim || g.output_dim() != SIDE * SIDE {
        return Err(Error::Format(format!(
            "checkpoint generator maps {} -> {}, expected {} -> {}",
            g.input_dim(),
            g.output_dim(),
            ckpt.latent_dim,
            SIDE * SIDE
        )));
    }
    let base = RngStream::new(seed, 0);
    const CHUNK: usize = 1024;
    let chunks: Vec<Vec<Image>> = (0..n)
        .step_by(CHUNK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| -> Result<Vec<Image>> {
            let rows = CHUNK.min(n - start);
            let data: Vec<f32> = (start..start + rows)
                .flat_map(|k| {
                    let mut s = base.derive(k as u64);
                    (0..ckpt.latent_dim)
                        .map(move |_| s.gaussian() as f32)
                        .collect::<Vec<_>>()
                })
                .collect();
            let z = Matrix::from_vec(rows, ckpt.latent_dim, data)?;
            let (out, _) = g.forward(&z)?;
            (0..rows)
                .map(|r| Image::new(SIDE, SIDE, out.row(r).to_vec()))
                .collect()
        })
        .collect::<Result<_>>()?;
    Batch::new(chunks.into_iter().flatten().collect(), seed)
}
