//! Image and batch containers, deterministic RNG streams, and the on-disk
//! formats used by the pipeline.

mod image;
mod nsst;
mod pgm;
mod rng;

pub use image::{Batch, Image};
pub use nsst::{read_tensor, write_tensor, NSST_MAGIC, NSST_VERSION};
pub use pgm::{export_pgm, pgm_level};
pub use rng::{gaussian_draw, RngStream};
