//! Noisy scale-space regularization for GAN training.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensorio`]: image and batch containers, seeded RNG streams, NSST/PGM files.
//! - [`scalespace`]: the scale-space, noise-space and noisy scale-space filters
//!   plus the annealing schedule for the filter time `t`.
//! - [`hadamard`]: the eight vertical Walsh–Hadamard bases and the synthetic
//!   stripe dataset built from them.
//! - [`nn`]: a small dense network with hand-written backpropagation and Adam.
//! - [`gan`]: GAN objectives and the filtered, half-batch training loop.
//! - [`metrics`]: pooled variance, coefficient statistics and a
//!   coefficient-space Fréchet distance.

pub mod error;
pub mod gan;
pub mod hadamard;
pub mod metrics;
pub mod nn;
pub mod scalespace;
pub mod tensorio;

pub use error::{Error, Result};
