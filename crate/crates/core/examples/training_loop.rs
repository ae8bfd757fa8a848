//! The generic training loop on a toy task: Adam with global-norm clipping,
//! early stopping and restoration of the best parameters.

use anyhow::Result;
use drillmae::nn::{Activation, Batch, BatchSource, CellKind, LayerSpec, ModelGraph, TrainConfig};
use ndarray::Array2;

/// Sequences of a noisy sine; the target is the last value's sign-flip.
struct Toy {
    xs: Vec<Vec<f32>>,
}

impl BatchSource<f32> for Toy {
    fn len(&self) -> usize {
        self.xs.len()
    }

    fn batch(&self, idx: &[usize], _epoch: usize) -> drillmae::Result<Batch<f32>> {
        let steps = self.xs[0].len();
        let inputs = (0..steps)
            .map(|t| Array2::from_shape_fn((idx.len(), 1), |(b, _)| self.xs[idx[b]][t]))
            .collect();
        let targets = Array2::from_shape_fn((idx.len(), 1), |(b, _)| -self.xs[idx[b]][steps - 1]);
        Ok(Batch {
            inputs: Activation::Seq(inputs),
            targets: Activation::Flat(targets),
        })
    }
}

fn toy(n: usize, phase: f32) -> Toy {
    Toy {
        xs: (0..n)
            .map(|i| (0..12).map(|t| ((t as f32 + i as f32 * 0.37 + phase) * 0.5).sin()).collect())
            .collect(),
    }
}

fn main() -> Result<()> {
    let mut g = ModelGraph::<f32>::new(
        (12, 1),
        vec![LayerSpec::recurrent(CellKind::Gru, 8, false), LayerSpec::affine(1)],
        1,
    )?;
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        batch_size: 16,
        max_epochs: 40,
        patience: 4,
        ..TrainConfig::default()
    };
    let report = drillmae::nn::train(&mut g, &toy(256, 0.0), &toy(64, 0.1), &cfg)?;
    for e in &report.epochs {
        println!("epoch {:>2}: train {:.4} val {:.4}", e.epoch, e.train_loss, e.val_loss);
    }
    println!(
        "best epoch {:?}, val {:.4}, stopped early: {}, restored: {}",
        report.best_epoch, report.best_val_loss, report.stopped_early, report.restored
    );
    Ok(())
}
