//! Adapters from window sets to training batches.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::nn::{Activation, Batch, BatchSource, Scalar};
use crate::windows::{LabeledWindow, WindowSet};

/// Stacks `(T, F)` windows into `T` matrices of shape `(B, F)`.
pub fn time_major<T: Scalar>(windows: &[ArrayView2<'_, f32>]) -> Result<Vec<Array2<T>>> {
    let first = windows.first().ok_or(Error::Empty("batch"))?;
    let (steps, features) = first.dim();
    if let Some(w) = windows.iter().find(|w| w.dim() != (steps, features)) {
        return Err(Error::shape(format!("({steps}, {features})"), format!("{:?}", w.dim())));
    }
    Ok((0..steps)
        .map(|t| {
            Array2::from_shape_fn((windows.len(), features), |(b, f)| T::of(windows[b][[t, f]] as f64))
        })
        .collect())
}

/// Supervised batches: window inputs with a `(B, 1)` label column.
#[derive(Debug, Clone, Copy)]
pub struct LabeledBatches<'a> {
    windows: &'a [LabeledWindow],
}

impl<'a> LabeledBatches<'a> {
    pub fn new(windows: &'a [LabeledWindow]) -> Self {
        Self { windows }
    }

    pub fn of(set: &'a WindowSet) -> Self {
        Self::new(&set.windows)
    }
}

impl<T: Scalar> BatchSource<T> for LabeledBatches<'_> {
    fn len(&self) -> usize {
        self.windows.len()
    }

    fn batch(&self, indices: &[usize], _epoch: usize) -> Result<Batch<T>> {
        let picked: Vec<&LabeledWindow> = indices.iter().map(|&i| &self.windows[i]).collect();
        let views: Vec<_> = picked.iter().map(|w| w.inputs()).collect();
        let targets = Array2::from_shape_fn((picked.len(), 1), |(b, _)| T::of(picked[b].label as f64));
        Ok(Batch {
            inputs: Activation::Seq(time_major(&views)?),
            targets: Activation::Flat(targets),
        })
    }
}

/// Precomputed flat features (e.g. frozen-encoder context vectors) with
/// labels, presented as length-1 sequences.
#[derive(Debug, Clone)]
pub struct FeatureBatches<T> {
    pub features: Array2<T>,
    pub labels: Vec<T>,
}

impl<T: Scalar> BatchSource<T> for FeatureBatches<T> {
    fn len(&self) -> usize {
        self.labels.len()
    }

    fn batch(&self, indices: &[usize], _epoch: usize) -> Result<Batch<T>> {
        let x = self.features.select(ndarray::Axis(0), indices);
        let y = Array2::from_shape_fn((indices.len(), 1), |(b, _)| self.labels[indices[b]]);
        Ok(Batch {
            inputs: Activation::Seq(vec![x]),
            targets: Activation::Flat(y),
        })
    }
}
