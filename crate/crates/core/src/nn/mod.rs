//! A small recurrent-network engine: LSTM/GRU sequence layers, affine and
//! time-distributed affine layers, dropout, backpropagation through time,
//! Adam with global-norm clipping and an early-stopping training loop.
//!
//! Everything is generic over [`Scalar`] so the same code runs in `f32` for
//! training and `f64` for finite-difference gradient checks.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::Float;

mod graph;
mod layer;
pub mod metrics;
mod optim;
pub mod snapshot;
mod train;

pub use graph::{Activation, Mode, ModelGraph, ParamRef};
pub use layer::{CellKind, Layer, LayerKind, LayerSpec, Param};
pub use metrics::{mae_loss, mae_metric, rmse_metric};
pub use optim::{clip_global_norm, Adam, AdamParams, StepOutcome};
pub use train::{
    evaluate_loss, predict, train, Batch, BatchSource, EarlyStopping, EpochRecord, StopDecision,
    TrainConfig, TrainReport,
};

pub trait Scalar:
    Float
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn of(v: f64) -> Self;
    fn f64(self) -> f64;
}

impl Scalar for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }

    fn f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn of(v: f64) -> Self {
        v
    }

    fn f64(self) -> f64 {
        self
    }
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}
