use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;

use super::graph::{Activation, Mode, ModelGraph};
use super::metrics::mae_loss;
use super::optim::{Adam, AdamParams, StepOutcome};
use super::Scalar;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, mix, rng_from};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 15,
            patience: 5,
            clip_norm: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate", "must be positive"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::param("clip_norm", "must be positive"));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
        ] {
            if v == 0 {
                return Err(Error::param(name, "must be at least 1"));
            }
        }
        Ok(())
    }
}

/// One mini-batch. Inputs are time-major; targets match the model output
/// layout (flat `(B, 1)` for regression, a sequence for reconstruction).
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub inputs: Activation<T>,
    pub targets: Activation<T>,
}

/// A random-access dataset. `epoch` lets sources vary per-epoch corruption
/// (e.g. masks); deterministic sources ignore it.
pub trait BatchSource<T>: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn batch(&self, indices: &[usize], epoch: usize) -> Result<Batch<T>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Patience-based early stopping on a strictly improving monitored value.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    pub patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: None,
            wait: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, value: f64) -> StopDecision {
        if value < self.best {
            self.best = value;
            self.best_epoch = Some(epoch);
            self.wait = 0;
            return StopDecision::Improved;
        }
        self.wait += 1;
        if self.wait >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best_epoch.map(|e| (e, self.best))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: Option<usize>,
    pub best_val_loss: f64,
    pub restored: bool,
    pub nan_terminated: bool,
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.epochs.len()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "epoch,train_loss,val_loss,best")?;
        for r in &self.epochs {
            let best = u8::from(Some(r.epoch) == self.best_epoch);
            writeln!(f, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, best)?;
        }
        f.flush()?;
        Ok(())
    }
}

fn batches(n: usize, batch_size: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..n)
        .step_by(batch_size)
        .map(move |s| (s..(s + batch_size).min(n)).collect())
}

/// Mean per-element MAE of the model over a whole source, in inference mode.
pub fn evaluate_loss<T: Scalar>(
    graph: &mut ModelGraph<T>,
    source: &dyn BatchSource<T>,
    batch_size: usize,
    epoch: usize,
) -> Result<f64> {
    if source.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut total = 0.0;
    for idx in batches(source.len(), batch_size) {
        let b = source.batch(&idx, epoch)?;
        let out = graph.forward(b.inputs, Mode::Infer)?;
        let (loss, _) = mae_loss(&out, &b.targets)?;
        total += loss * idx.len() as f64;
    }
    Ok(total / source.len() as f64)
}

/// Inference outputs for every sample, sample-major.
pub fn predict<T: Scalar>(
    graph: &mut ModelGraph<T>,
    source: &dyn BatchSource<T>,
    batch_size: usize,
) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for idx in batches(source.len(), batch_size) {
        let b = source.batch(&idx, 0)?;
        match graph.forward(b.inputs, Mode::Infer)? {
            Activation::Flat(y) => out.extend(y.iter().map(|v| v.f64())),
            seq => out.extend(seq.to_batch().iter().map(|v| v.f64())),
        }
    }
    Ok(out)
}

/// Mini-batch Adam training with MAE loss and early stopping on the
/// validation loss. On a non-finite loss or gradient training halts at once
/// and the best parameters seen so far (or the initial ones) are restored.
pub fn train<T: Scalar>(
    graph: &mut ModelGraph<T>,
    train_set: &dyn BatchSource<T>,
    val_set: &dyn BatchSource<T>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if val_set.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    graph.reseed_dropout(derive_seed(cfg.seed, "dropout"));
    let mut adam = Adam::new(AdamParams {
        learning_rate: cfg.learning_rate,
        clip_norm: Some(cfg.clip_norm),
        ..AdamParams::default()
    });
    let shuffle_seed = derive_seed(cfg.seed, "shuffle");
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = graph.snapshot();
    let mut epochs = Vec::new();
    let mut nan_terminated = false;
    let mut stopped_early = false;
    let n = train_set.len();

    'epochs: for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_from(mix(shuffle_seed, epoch as u64)));
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let b = train_set.batch(chunk, epoch)?;
            let out = graph.forward(b.inputs, Mode::Train)?;
            let (loss, grad) = mae_loss(&out, &b.targets)?;
            if !loss.is_finite() {
                nan_terminated = true;
                break 'epochs;
            }
            graph.backward(grad)?;
            if adam.step(graph) == StepOutcome::NonFinite {
                nan_terminated = true;
                break 'epochs;
            }
            total += loss * chunk.len() as f64;
        }
        let val_loss = evaluate_loss(graph, val_set, cfg.batch_size, epoch)?;
        if !val_loss.is_finite() {
            nan_terminated = true;
            break;
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss: total / n as f64,
            val_loss,
        });
        match stopper.observe(epoch, val_loss) {
            StopDecision::Improved => best = graph.snapshot(),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                stopped_early = true;
                break;
            }
        }
    }
    graph.restore(&best)?;
    let (best_epoch, best_val_loss) = match stopper.best() {
        Some((e, v)) => (Some(e), v),
        None => (None, f64::NAN),
    };
    Ok(TrainReport {
        epochs,
        best_epoch,
        best_val_loss,
        restored: best_epoch.is_some(),
        nan_terminated,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stopping_example() {
        let mut es = EarlyStopping::new(5);
        let vals = [5.0, 4.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let mut stopped = None;
        for (i, v) in vals.iter().enumerate() {
            if es.observe(i + 1, *v) == StopDecision::Stop {
                stopped = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped, Some(8));
        assert_eq!(es.best(), Some((3, 3.0)));
    }

    #[test]
    fn monotone_improvement_never_stops() {
        let mut es = EarlyStopping::new(2);
        for e in 1..=10 {
            assert_eq!(es.observe(e, 10.0 - e as f64), StopDecision::Improved);
        }
        assert_eq!(es.best().unwrap().0, 10);
    }

    #[test]
    fn ties_do_not_count_as_improvement() {
        let mut es = EarlyStopping::new(1);
        es.observe(1, 1.0);
        assert_eq!(es.observe(2, 1.0), StopDecision::Stop);
    }
}
