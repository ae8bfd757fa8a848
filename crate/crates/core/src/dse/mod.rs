//! Full-factorial design-space search over autoencoder configurations plus
//! the two supervised baselines.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mae::{build_autoencoder, pretrain, MaeConfig};
use crate::nn::snapshot::{layers_digest, write_snapshot};
use crate::nn::{CellKind, ModelGraph, TrainConfig, TrainReport};
use crate::rng::derive_seed;
use crate::transfer::{
    build_baseline, build_finetune_model, extract_encoder, finetune, train_supervised, TaskHeadSpec,
    TestSet, DEFAULT_HEADER_WIDTH,
};
use crate::windows::PreparedData;

pub mod analysis;
pub mod report;

pub use crate::mae::enumerate_grid;

/// What a record was trained as.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelTag {
    Mae(MaeConfig),
    Baseline(CellKind),
}

impl ModelTag {
    pub fn config(&self) -> Option<&MaeConfig> {
        match self {
            ModelTag::Mae(c) => Some(c),
            ModelTag::Baseline(_) => None,
        }
    }

    pub fn is_baseline(&self) -> bool {
        matches!(self, ModelTag::Baseline(_))
    }
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelTag::Mae(c) => c.fmt(f),
            ModelTag::Baseline(cell) => write!(f, "baseline-{cell}"),
        }
    }
}

impl FromStr for ModelTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix("baseline-") {
            Some(cell) => Ok(ModelTag::Baseline(cell.parse()?)),
            None => Ok(ModelTag::Mae(s.parse()?)),
        }
    }
}

/// One trained model and its held-out metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub tag: ModelTag,
    pub seed: u64,
    pub test_mae: f64,
    pub test_rmse: f64,
    /// Best validation MAE of the supervised stage.
    pub val_mae: f64,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub wall_time_s: f64,
    pub nan: bool,
    /// Set when the run failed for a reason other than a non-finite loss.
    pub error: Option<String>,
}

impl RunRecord {
    pub fn failed(tag: ModelTag, seed: u64, error: Option<String>) -> Self {
        Self {
            tag,
            seed,
            test_mae: f64::NAN,
            test_rmse: f64::NAN,
            val_mae: f64::NAN,
            stage1_epochs: 0,
            stage2_epochs: 0,
            wall_time_s: 0.0,
            nan: true,
            error,
        }
    }

    pub fn name(&self) -> String {
        self.tag.to_string()
    }

    /// Usable for statistics: completed with finite metrics.
    pub fn is_valid(&self) -> bool {
        !self.nan && self.test_mae.is_finite() && self.test_rmse.is_finite()
    }

    /// Equality ignoring wall time, which is the only field allowed to vary
    /// between otherwise identical executions.
    pub fn same_outcome(&self, other: &Self) -> bool {
        let eq = |a: f64, b: f64| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan());
        self.tag == other.tag
            && self.seed == other.seed
            && eq(self.test_mae, other.test_mae)
            && eq(self.test_rmse, other.test_rmse)
            && eq(self.val_mae, other.val_mae)
            && self.stage1_epochs == other.stage1_epochs
            && self.stage2_epochs == other.stage2_epochs
            && self.nan == other.nan
            && self.error == other.error
    }
}

/// Executes one model of the search. Implementations must be deterministic
/// in `(tag, seed)` and must not share mutable state between calls.
pub trait Runner: Sync {
    fn run(&self, tag: ModelTag, seed: u64) -> Result<RunRecord>;
}

/// Per-run seed derived from the base seed and the canonical name, so a
/// run's randomness does not depend on execution order.
pub fn run_seed(base: u64, tag: &ModelTag) -> u64 {
    derive_seed(base, &tag.to_string())
}

/// Runs every configuration of `grid` followed by the LSTM and GRU
/// baselines on a pool of `workers` threads. Records come back in job order;
/// a failing run is recorded with its NaN flag set.
pub fn run_all(
    grid: &[MaeConfig],
    runner: &dyn Runner,
    base_seed: u64,
    workers: usize,
) -> Result<Vec<RunRecord>> {
    if grid.is_empty() {
        return Err(Error::Empty("design grid"));
    }
    let jobs: Vec<ModelTag> = grid
        .iter()
        .copied()
        .map(ModelTag::Mae)
        .chain([ModelTag::Baseline(CellKind::Lstm), ModelTag::Baseline(CellKind::Gru)])
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::param("workers", e.to_string()))?;
    Ok(pool.install(|| {
        jobs.par_iter()
            .map(|&tag| {
                let seed = run_seed(base_seed, &tag);
                runner
                    .run(tag, seed)
                    .unwrap_or_else(|e| RunRecord::failed(tag, seed, Some(e.to_string())))
            })
            .collect()
    }))
}

/// Training settings for the three kinds of training the search performs.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSettings {
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub baseline: TrainConfig,
    pub header_width: usize,
    pub eval_batch: usize,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            pretrain: TrainConfig {
                max_epochs: 10,
                ..TrainConfig::default()
            },
            finetune: TrainConfig::default(),
            baseline: TrainConfig::default(),
            header_width: DEFAULT_HEADER_WIDTH,
            eval_batch: 256,
        }
    }
}

/// The real pipeline: Stage 1 pretraining, encoder extraction, Stage 2
/// fine-tuning and a single test evaluation per model.
pub struct PipelineRunner<'a> {
    pub data: &'a PreparedData,
    pub test: &'a TestSet,
    pub settings: SearchSettings,
    /// When set, encoder and fine-tuned snapshots are written here.
    pub snapshot_dir: Option<PathBuf>,
}

impl PipelineRunner<'_> {
    /// Stage 1 for one configuration; returns the trained autoencoder.
    pub fn stage1(&self, cfg: &MaeConfig, seed: u64) -> Result<(ModelGraph<f32>, TrainReport)> {
        let data = self.data;
        let (steps, features) = (data.train.window_len(), data.train.features());
        let mut ae = build_autoencoder(cfg, features, steps, derive_seed(seed, "init-ae"))?;
        let s1 = TrainConfig {
            seed: derive_seed(seed, "stage1"),
            ..self.settings.pretrain.clone()
        };
        let r1 = pretrain(
            &mut ae,
            &data.train.unlabeled(),
            &data.validation.unlabeled(),
            cfg.mask_fraction(),
            &s1,
        )?;
        Ok((ae, r1))
    }

    /// Stage 2 from a pretrained autoencoder, then one test evaluation.
    /// `stage1_epochs` is copied into the record.
    pub fn stage2(
        &self,
        cfg: &MaeConfig,
        seed: u64,
        ae: &ModelGraph<f32>,
        stage1_epochs: usize,
    ) -> Result<RunRecord> {
        let start = Instant::now();
        let tag = ModelTag::Mae(*cfg);
        let data = self.data;
        let enc = extract_encoder(ae, cfg.encoder_depth as usize)?;
        let digest = enc.digest();
        let head = TaskHeadSpec {
            width: self.settings.header_width,
            ..TaskHeadSpec::new(cfg.header_depth as usize, cfg.cell)
        };
        let mut model = build_finetune_model(&enc, &head, derive_seed(seed, "init-head"))?;
        let s2 = TrainConfig {
            seed: derive_seed(seed, "stage2"),
            ..self.settings.finetune.clone()
        };
        let r2 = finetune(&mut model, &data.train, &data.validation, &s2)?;
        if layers_digest(&model.layers()[..enc.depth()]) != digest {
            return Err(Error::param("encoder", "frozen parameters changed during fine-tuning"));
        }
        if let Some(dir) = &self.snapshot_dir {
            write_snapshot(&dir.join(format!("{tag}.encoder.par")), &enc.graph(), &tag.to_string())?;
            write_snapshot(&dir.join(format!("{tag}.par")), &model, &tag.to_string())?;
        }
        let mut rec = RunRecord {
            tag,
            seed,
            test_mae: f64::NAN,
            test_rmse: f64::NAN,
            val_mae: r2.best_val_loss,
            stage1_epochs,
            stage2_epochs: r2.epochs_run(),
            wall_time_s: 0.0,
            nan: r2.nan_terminated,
            error: None,
        };
        if !r2.nan_terminated {
            let e = self.test.evaluate_finetuned(&model, self.settings.eval_batch)?;
            rec.test_mae = e.mae;
            rec.test_rmse = e.rmse;
        }
        rec.wall_time_s = start.elapsed().as_secs_f64();
        Ok(rec)
    }

    fn run_mae(&self, cfg: &MaeConfig, seed: u64) -> Result<RunRecord> {
        let start = Instant::now();
        let (ae, r1) = self.stage1(cfg, seed)?;
        if r1.nan_terminated {
            let mut rec = RunRecord::failed(ModelTag::Mae(*cfg), seed, None);
            rec.stage1_epochs = r1.epochs_run();
            rec.wall_time_s = start.elapsed().as_secs_f64();
            return Ok(rec);
        }
        let mut rec = self.stage2(cfg, seed, &ae, r1.epochs_run())?;
        rec.wall_time_s = start.elapsed().as_secs_f64();
        Ok(rec)
    }

    /// One supervised baseline, trained and evaluated once.
    pub fn baseline(&self, cell: CellKind, seed: u64) -> Result<RunRecord> {
        self.run_baseline(cell, seed)
    }

    fn run_baseline(&self, cell: CellKind, seed: u64) -> Result<RunRecord> {
        let start = Instant::now();
        let data = self.data;
        let mut model = build_baseline(
            cell,
            data.train.window_len(),
            data.train.features(),
            derive_seed(seed, "init"),
        )?;
        let cfg = TrainConfig {
            seed: derive_seed(seed, "train"),
            ..self.settings.baseline.clone()
        };
        let r = train_supervised(&mut model, &data.train, &data.validation, &cfg)?;
        let tag = ModelTag::Baseline(cell);
        if let Some(dir) = &self.snapshot_dir {
            write_snapshot(&dir.join(format!("{tag}.par")), &model, &tag.to_string())?;
        }
        let mut rec = RunRecord {
            tag,
            seed,
            test_mae: f64::NAN,
            test_rmse: f64::NAN,
            val_mae: r.best_val_loss,
            stage1_epochs: 0,
            stage2_epochs: r.epochs_run(),
            wall_time_s: 0.0,
            nan: r.nan_terminated,
            error: None,
        };
        if !r.nan_terminated {
            let e = self.test.evaluate(&mut model, self.settings.eval_batch)?;
            rec.test_mae = e.mae;
            rec.test_rmse = e.rmse;
        }
        rec.wall_time_s = start.elapsed().as_secs_f64();
        Ok(rec)
    }
}

impl Runner for PipelineRunner<'_> {
    fn run(&self, tag: ModelTag, seed: u64) -> Result<RunRecord> {
        match tag {
            ModelTag::Mae(cfg) => self.run_mae(&cfg, seed),
            ModelTag::Baseline(cell) => self.run_baseline(cell, seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fake;

    impl Runner for Fake {
        fn run(&self, tag: ModelTag, seed: u64) -> Result<RunRecord> {
            if tag.to_string() == "ae1-lat50-hd1-LSTM-m50" {
                return Ok(RunRecord::failed(tag, seed, None));
            }
            if tag.to_string() == "ae2-lat20-hd1-LSTM-m20" {
                return Err(Error::Empty("boom"));
            }
            let x = (seed % 1000) as f64 / 1000.0;
            Ok(RunRecord {
                tag,
                seed,
                test_mae: x,
                test_rmse: x * 1.5,
                val_mae: x,
                stage1_epochs: 10,
                stage2_epochs: 15,
                wall_time_s: x,
                nan: false,
                error: None,
            })
        }
    }

    #[test]
    fn records_per_job_and_failures_isolated() {
        let grid = enumerate_grid();
        let a = run_all(&grid, &Fake, 42, 1).unwrap();
        let b = run_all(&grid, &Fake, 42, 4).unwrap();
        assert_eq!(a.len(), 74);
        assert!(a.iter().zip(&b).all(|(x, y)| x.same_outcome(y)));
        assert_eq!(a.iter().filter(|r| r.nan).count(), 2);
        assert!(a[72].tag.is_baseline() && a[73].tag.is_baseline());
        assert!(run_all(&[], &Fake, 42, 1).is_err());
    }

    #[test]
    fn tags_round_trip() {
        for t in ["baseline-GRU", "baseline-LSTM", "ae2-lat50-hd1-LSTM-m80"] {
            assert_eq!(t.parse::<ModelTag>().unwrap().to_string(), t);
        }
    }
}
