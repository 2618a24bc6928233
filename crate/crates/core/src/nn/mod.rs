//! Dense feed-forward networks with hand-written reverse mode and Adam.
//!
//! Networks are generic over [`Scalar`] so that training can run in f32 while
//! gradient checks run on an f64 copy of the same parameters.

mod adam;
mod checkpoint;
mod dense;

pub use adam::{adam_step, AdamState, OptimizerConfig, SYNTHETIC_LR};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use dense::{
    init_net, Activation, Cache, Dense, DenseNet, Gradients, LayerSpec, Matrix, NetSpec,
    INIT_WEIGHT_STD, LEAKY_SLOPE,
};

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Send + Sync + std::iter::Sum + 'static
{
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("representable")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
