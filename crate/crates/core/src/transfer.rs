//! Frozen-encoder transfer, supervised baselines and test-set evaluation.

use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::batches::{time_major, FeatureBatches, LabeledBatches};
use crate::error::{Error, Result};
use crate::nn::snapshot::layers_digest;
use crate::nn::{
    mae_metric, predict, rmse_metric, train, Activation, CellKind, Layer, LayerKind, LayerSpec,
    Mode, ModelGraph, TrainConfig, TrainReport,
};
use crate::windows::{LabeledWindow, WindowSet};

pub const DEFAULT_HEADER_WIDTH: usize = 64;
pub const BASELINE_WIDTH: usize = 64;
pub const BASELINE_DROPOUT: f64 = 0.3;

/// The first half of a trained autoencoder, frozen, emitting the final
/// hidden state of its last layer.
#[derive(Debug, Clone)]
pub struct EncoderHandle {
    pub layers: Vec<Layer<f32>>,
    pub input_shape: (usize, usize),
}

impl EncoderHandle {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn latent_width(&self) -> usize {
        self.layers.last().map_or(0, Layer::out_width)
    }

    pub fn cell(&self) -> CellKind {
        match self.layers[0].spec.kind {
            LayerKind::Recurrent { cell, .. } => cell,
            _ => unreachable!("encoder layers are recurrent"),
        }
    }

    /// SHA-256 of the encoder parameters.
    pub fn digest(&self) -> String {
        layers_digest(&self.layers)
    }

    pub fn graph(&self) -> ModelGraph<f32> {
        ModelGraph::from_layers(self.input_shape, self.layers.clone(), 0)
            .expect("encoder layers were validated at extraction")
    }
}

/// Copies the first `depth` recurrent layers of `ae`, switches the last one
/// to final-state output and freezes all of them.
pub fn extract_encoder(ae: &ModelGraph<f32>, depth: usize) -> Result<EncoderHandle> {
    let layers = ae.layers();
    let recurrent = layers.iter().filter(|l| l.spec.is_recurrent()).count();
    let projection_last = layers
        .last()
        .is_some_and(|l| l.spec.kind == LayerKind::TimeDistributedAffine);
    if depth == 0 || recurrent != 2 * depth {
        return Err(Error::LayerCount {
            expected: 2 * depth,
            actual: recurrent,
        });
    }
    if !projection_last || layers.len() != 2 * depth + 1 {
        return Err(Error::param(
            "autoencoder",
            "expected recurrent layers followed by one time-distributed projection",
        ));
    }
    let mut enc: Vec<Layer<f32>> = layers[..depth].to_vec();
    for l in &mut enc {
        l.spec.trainable = false;
    }
    if let LayerKind::Recurrent {
        return_sequences, ..
    } = &mut enc[depth - 1].spec.kind
    {
        *return_sequences = false;
    }
    Ok(EncoderHandle {
        layers: enc,
        input_shape: ae.input_shape(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskHeadSpec {
    pub depth: usize,
    pub cell: CellKind,
    pub width: usize,
}

impl TaskHeadSpec {
    pub fn new(depth: usize, cell: CellKind) -> Self {
        Self {
            depth,
            cell,
            width: DEFAULT_HEADER_WIDTH,
        }
    }

    fn layer_specs(&self) -> Vec<LayerSpec> {
        let mut specs: Vec<LayerSpec> = (0..self.depth)
            .map(|i| LayerSpec::recurrent(self.cell, self.width, i + 1 < self.depth))
            .collect();
        specs.push(LayerSpec::affine(1));
        specs
    }
}

fn build_header(latent: usize, head: &TaskHeadSpec, seed: u64) -> Result<ModelGraph<f32>> {
    if head.depth == 0 {
        return Err(Error::param("header_depth", "must be at least 1"));
    }
    ModelGraph::new((1, latent), head.layer_specs(), seed)
}

/// Frozen encoder followed by the trainable header. The header's first
/// recurrent layer sees the context vector as a one-step sequence.
pub fn build_finetune_model(
    enc: &EncoderHandle,
    head: &TaskHeadSpec,
    seed: u64,
) -> Result<ModelGraph<f32>> {
    let header = build_header(enc.latent_width(), head, seed)?;
    let mut layers = enc.layers.clone();
    layers.extend(header.into_layers());
    ModelGraph::from_layers(enc.input_shape, layers, seed)
}

/// Number of leading frozen layers of a fine-tune model.
fn frozen_prefix(model: &ModelGraph<f32>) -> usize {
    model
        .layers()
        .iter()
        .take_while(|l| !l.spec.trainable)
        .count()
}

/// Runs the frozen prefix of `model` over `windows` once, returning the
/// context vectors `(N, d_z)`.
pub fn encode(model: &ModelGraph<f32>, windows: &[LabeledWindow], batch_size: usize) -> Result<Array2<f32>> {
    let depth = frozen_prefix(model);
    if depth == 0 {
        return Err(Error::param("model", "has no frozen encoder"));
    }
    let mut enc = ModelGraph::from_layers(model.input_shape(), model.layers()[..depth].to_vec(), 0)?;
    let width = enc.output_width();
    let mut out = Array2::zeros((windows.len(), width));
    for (k, chunk) in windows.chunks(batch_size.max(1)).enumerate() {
        let views: Vec<_> = chunk.iter().map(LabeledWindow::inputs).collect();
        let Activation::Flat(z) = enc.forward(Activation::Seq(time_major(&views)?), Mode::Infer)? else {
            return Err(Error::shape("final-state encoder output", "sequence"));
        };
        let start = k * batch_size.max(1);
        out.slice_mut(ndarray::s![start..start + chunk.len(), ..]).assign(&z);
    }
    Ok(out)
}

/// Stage 2: trains only the header. Frozen-encoder features are computed
/// once, the header is trained on them and its parameters are written back
/// into `model`; this is equivalent to training the composite graph because
/// the encoder receives no updates and has no dropout.
pub fn finetune(
    model: &mut ModelGraph<f32>,
    train_set: &WindowSet,
    val_set: &WindowSet,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let depth = frozen_prefix(model);
    if model.layers()[depth..].iter().any(|l| !l.spec.trainable) {
        return Err(Error::param("model", "frozen layers must form a prefix"));
    }
    let features = |set: &WindowSet| -> Result<FeatureBatches<f32>> {
        Ok(FeatureBatches {
            features: encode(model, &set.windows, cfg.batch_size)?,
            labels: set.labels(),
        })
    };
    let (train_src, val_src) = (features(train_set)?, features(val_set)?);
    let latent = train_src.features.ncols();
    let header_layers = model.layers()[depth..].to_vec();
    let mut header = ModelGraph::from_layers((1, latent), header_layers, cfg.seed)?;
    let report = train(&mut header, &train_src, &val_src, cfg)?;
    for (dst, src) in model.layers_mut()[depth..].iter_mut().zip(header.into_layers()) {
        *dst = src;
    }
    Ok(report)
}

/// Reference Stage 2 on the full composite graph, without feature caching.
pub fn finetune_composite(
    model: &mut ModelGraph<f32>,
    train_set: &WindowSet,
    val_set: &WindowSet,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    train(model, &LabeledBatches::of(train_set), &LabeledBatches::of(val_set), cfg)
}

/// Two stacked recurrent layers of 64 units with dropout 0.3 between them
/// and a scalar linear output.
pub fn build_baseline(cell: CellKind, steps: usize, features: usize, seed: u64) -> Result<ModelGraph<f32>> {
    ModelGraph::new(
        (steps, features),
        vec![
            LayerSpec::recurrent(cell, BASELINE_WIDTH, true),
            LayerSpec::dropout(BASELINE_DROPOUT),
            LayerSpec::recurrent(cell, BASELINE_WIDTH, false),
            LayerSpec::affine(1),
        ],
        seed,
    )
}

pub fn train_supervised(
    model: &mut ModelGraph<f32>,
    train_set: &WindowSet,
    val_set: &WindowSet,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    train(model, &LabeledBatches::of(train_set), &LabeledBatches::of(val_set), cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mae: f64,
    pub rmse: f64,
    pub n: usize,
}

/// The held-out split. Every evaluation is counted so callers can assert
/// that each model touched it exactly once.
#[derive(Debug)]
pub struct TestSet {
    set: WindowSet,
    reads: AtomicUsize,
}

impl TestSet {
    pub fn new(set: WindowSet) -> Self {
        Self {
            set,
            reads: AtomicUsize::new(0),
        }
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    pub fn reads(&self) -> usize {
        self.reads.load(Ordering::SeqCst)
    }

    /// Window identities only; labels and inputs stay sealed.
    pub fn ids(&self) -> Vec<crate::windows::WindowId> {
        self.set.ids()
    }

    pub fn evaluate(&self, model: &mut ModelGraph<f32>, batch_size: usize) -> Result<Evaluation> {
        self.reads.fetch_add(1, Ordering::SeqCst);
        let y_hat = predict(model, &LabeledBatches::of(&self.set), batch_size)?;
        let y: Vec<f64> = self.set.labels().iter().map(|&v| v as f64).collect();
        Ok(Evaluation {
            mae: mae_metric(&y, &y_hat)?,
            rmse: rmse_metric(&y, &y_hat)?,
            n: y.len(),
        })
    }

    /// Evaluation via precomputed frozen-encoder features; counts as a read.
    pub fn evaluate_finetuned(&self, model: &ModelGraph<f32>, batch_size: usize) -> Result<Evaluation> {
        self.reads.fetch_add(1, Ordering::SeqCst);
        let depth = frozen_prefix(model);
        let z = encode(model, &self.set.windows, batch_size)?;
        let mut header = ModelGraph::from_layers((1, z.ncols()), model.layers()[depth..].to_vec(), 0)?;
        let mut y_hat = Vec::with_capacity(z.nrows());
        for chunk in z.axis_chunks_iter(Axis(0), batch_size.max(1)) {
            let out = header.forward(Activation::Seq(vec![chunk.to_owned()]), Mode::Infer)?;
            y_hat.extend(out.iter_values().map(f64::from));
        }
        let y: Vec<f64> = self.set.labels().iter().map(|&v| v as f64).collect();
        Ok(Evaluation {
            mae: mae_metric(&y, &y_hat)?,
            rmse: rmse_metric(&y, &y_hat)?,
            n: y.len(),
        })
    }
}
