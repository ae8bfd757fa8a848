//! Recurrent masked autoencoder: design points, width schedules, random
//! element masking and self-supervised pretraining.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::batches::time_major;
use crate::error::{Error, Result};
use crate::nn::{
    train, Activation, Batch, BatchSource, CellKind, LayerSpec, ModelGraph, TrainConfig,
    TrainReport,
};
use crate::rng::{mix, rng_from, Rng};
use crate::windows::UnlabeledWindow;

pub const ENCODER_DEPTHS: [u8; 2] = [1, 2];
pub const LATENT_PERCENTS: [u8; 3] = [20, 50, 80];
pub const HEADER_DEPTHS: [u8; 2] = [1, 2];
pub const CELLS: [CellKind; 2] = [CellKind::Lstm, CellKind::Gru];
pub const MASK_PERCENTS: [u8; 3] = [20, 50, 80];

/// One point of the design space. Percentages are stored as integers so
/// canonical names and rounding are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MaeConfig {
    pub encoder_depth: u8,
    pub latent_percent: u8,
    pub header_depth: u8,
    pub cell: CellKind,
    pub mask_percent: u8,
}

impl MaeConfig {
    pub fn new(
        encoder_depth: u8,
        latent_percent: u8,
        header_depth: u8,
        cell: CellKind,
        mask_percent: u8,
    ) -> Self {
        Self {
            encoder_depth,
            latent_percent,
            header_depth,
            cell,
            mask_percent,
        }
    }

    /// Checks every field against the searched levels.
    pub fn validate(&self) -> Result<()> {
        if !ENCODER_DEPTHS.contains(&self.encoder_depth) {
            return Err(Error::param("encoder_depth", format!("{} not in {{1, 2}}", self.encoder_depth)));
        }
        if !LATENT_PERCENTS.contains(&self.latent_percent) {
            return Err(Error::param("latent_percent", format!("{} not in {{20, 50, 80}}", self.latent_percent)));
        }
        if !HEADER_DEPTHS.contains(&self.header_depth) {
            return Err(Error::param("header_depth", format!("{} not in {{1, 2}}", self.header_depth)));
        }
        if !MASK_PERCENTS.contains(&self.mask_percent) {
            return Err(Error::param("mask_percent", format!("{} not in {{20, 50, 80}}", self.mask_percent)));
        }
        Ok(())
    }

    pub fn latent_fraction(&self) -> f64 {
        self.latent_percent as f64 / 100.0
    }

    pub fn mask_fraction(&self) -> f64 {
        self.mask_percent as f64 / 100.0
    }

    /// e.g. `ae1-lat80-hd2-GRU-m20`.
    pub fn canonical(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for MaeConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ae{}-lat{}-hd{}-{}-m{}",
            self.encoder_depth, self.latent_percent, self.header_depth, self.cell, self.mask_percent
        )
    }
}

impl FromStr for MaeConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::param("config", format!("cannot parse `{s}`"));
        let parts: Vec<&str> = s.trim().split('-').collect();
        let [ae, lat, hd, cell, m] = parts.as_slice() else {
            return Err(bad());
        };
        let num = |p: &str, prefix: &str| -> Result<u8> {
            p.strip_prefix(prefix).and_then(|v| v.parse().ok()).ok_or_else(bad)
        };
        Ok(Self {
            encoder_depth: num(ae, "ae")?,
            latent_percent: num(lat, "lat")?,
            header_depth: num(hd, "hd")?,
            cell: cell.parse()?,
            mask_percent: num(m, "m")?,
        })
    }
}

/// Rounds the positive rational `num / den` to the nearest integer, ties
/// away from zero.
fn round_ratio(num: u64, den: u64) -> u64 {
    (2 * num + den) / (2 * den)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WidthSchedule {
    pub latent: usize,
    /// Recurrent widths, encoder then mirrored decoder (length `2L`).
    pub widths: Vec<usize>,
}

impl WidthSchedule {
    pub fn encoder(&self) -> &[usize] {
        &self.widths[..self.widths.len() / 2]
    }
}

/// `d_z = round(F * p_z)`; encoder widths step linearly from `F` towards
/// `d_z` over `L` layers, the last two (centre) layers are `d_z`, and the
/// decoder mirrors the encoder.
pub fn width_schedule(features: usize, cfg: &MaeConfig) -> Result<WidthSchedule> {
    if features == 0 {
        return Err(Error::param("features", "must be at least 1"));
    }
    let depth = cfg.encoder_depth as u64;
    if depth == 0 {
        return Err(Error::param("encoder_depth", "must be at least 1"));
    }
    let f = features as u64;
    let latent = round_ratio(f * cfg.latent_percent as u64, 100);
    if latent < 1 {
        return Err(Error::UnusableBottleneck(latent as i64));
    }
    let mut encoder = Vec::with_capacity(depth as usize);
    for i in 1..depth {
        // F + (d_z - F) * i / L, as a rational over L; always positive.
        let num = (f * depth) as i64 + (latent as i64 - f as i64) * i as i64;
        encoder.push(round_ratio(num as u64, depth) as usize);
    }
    encoder.push(latent as usize);
    let mut widths = encoder.clone();
    widths.extend(encoder.iter().rev());
    Ok(WidthSchedule {
        latent: latent as usize,
        widths,
    })
}

/// Number of masked scalars for a `(T, F)` window.
pub fn mask_count(steps: usize, features: usize, fraction: f64) -> usize {
    ((steps * features) as f64 * fraction + 1e-9).floor() as usize
}

/// Masked `(t, f)` positions, sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSample {
    pub positions: Vec<(usize, usize)>,
}

impl MaskSample {
    pub fn draw(steps: usize, features: usize, fraction: f64, rng: &mut Rng) -> Self {
        let n = mask_count(steps, features, fraction).min(steps * features);
        let mut flat = sample(rng, steps * features, n).into_vec();
        flat.sort_unstable();
        Self {
            positions: flat.into_iter().map(|k| (k / features, k % features)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn apply(&self, x: &mut Array2<f32>) {
        for &(t, f) in &self.positions {
            x[[t, f]] = 0.0;
        }
    }
}

/// Zeroes `floor(T * F * p)` distinct positions drawn uniformly without
/// replacement. The input is not modified.
pub fn apply_mask(x: ArrayView2<'_, f32>, fraction: f64, rng: &mut Rng) -> (Array2<f32>, MaskSample) {
    let (steps, features) = x.dim();
    let mask = MaskSample::draw(steps, features, fraction, rng);
    let mut out = x.to_owned();
    mask.apply(&mut out);
    (out, mask)
}

/// `2L` sequence-returning recurrent layers following the width schedule
/// and a time-distributed linear projection back to `F` features.
pub fn build_autoencoder(
    cfg: &MaeConfig,
    features: usize,
    steps: usize,
    seed: u64,
) -> Result<ModelGraph<f32>> {
    let schedule = width_schedule(features, cfg)?;
    let mut specs: Vec<LayerSpec> = schedule
        .widths
        .iter()
        .map(|&w| LayerSpec::recurrent(cfg.cell, w, true))
        .collect();
    specs.push(LayerSpec::time_distributed(features));
    ModelGraph::new((steps, features), specs, seed)
}

/// Reconstruction batches: masked inputs, unmasked targets. With
/// `fixed_masks` the mask of a window ignores the epoch, which keeps the
/// validation signal stable; otherwise every epoch draws fresh masks.
#[derive(Debug, Clone, Copy)]
pub struct MaskedBatches<'a> {
    windows: &'a [UnlabeledWindow],
    fraction: f64,
    seed: u64,
    fixed_masks: bool,
}

impl<'a> MaskedBatches<'a> {
    pub fn fresh(windows: &'a [UnlabeledWindow], fraction: f64, seed: u64) -> Self {
        Self {
            windows,
            fraction,
            seed,
            fixed_masks: false,
        }
    }

    pub fn fixed(windows: &'a [UnlabeledWindow], fraction: f64, seed: u64) -> Self {
        Self {
            windows,
            fraction,
            seed,
            fixed_masks: true,
        }
    }

    /// The mask used for window `index` at `epoch`.
    pub fn mask(&self, index: usize, epoch: usize) -> MaskSample {
        let w = &self.windows[index];
        let base = mix(self.seed, w.id().key());
        let seed = if self.fixed_masks { base } else { mix(base, epoch as u64) };
        let (steps, features) = w.inputs().dim();
        MaskSample::draw(steps, features, self.fraction, &mut rng_from(seed))
    }
}

impl BatchSource<f32> for MaskedBatches<'_> {
    fn len(&self) -> usize {
        self.windows.len()
    }

    fn batch(&self, indices: &[usize], epoch: usize) -> Result<Batch<f32>> {
        let clean: Vec<ArrayView2<'_, f32>> = indices.iter().map(|&i| self.windows[i].inputs()).collect();
        let masked: Vec<Array2<f32>> = indices
            .iter()
            .zip(&clean)
            .map(|(&i, x)| {
                let mut m = x.to_owned();
                self.mask(i, epoch).apply(&mut m);
                m
            })
            .collect();
        let masked_views: Vec<_> = masked.iter().map(|m| m.view()).collect();
        Ok(Batch {
            inputs: Activation::Seq(time_major(&masked_views)?),
            targets: Activation::Seq(time_major(&clean)?),
        })
    }
}

/// Stage 1: trains the autoencoder to reconstruct masked windows, with fresh
/// masks per window and epoch for training and fixed masks for validation.
pub fn pretrain(
    ae: &mut ModelGraph<f32>,
    train_windows: &[UnlabeledWindow],
    val_windows: &[UnlabeledWindow],
    mask_fraction: f64,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if !(0.0..1.0).contains(&mask_fraction) {
        return Err(Error::param("mask_fraction", format!("{mask_fraction} not in [0, 1)")));
    }
    let train_src = MaskedBatches::fresh(train_windows, mask_fraction, mix(cfg.seed, 1));
    let val_src = MaskedBatches::fixed(val_windows, mask_fraction, mix(cfg.seed, 2));
    train(ae, &train_src, &val_src, cfg)
}

/// Every design point, in nested order: encoder depth, latent percent,
/// header depth, cell, mask percent.
pub fn enumerate_grid() -> Vec<MaeConfig> {
    let mut grid = Vec::with_capacity(72);
    for &l in &ENCODER_DEPTHS {
        for &pz in &LATENT_PERCENTS {
            for &lh in &HEADER_DEPTHS {
                for &cell in &CELLS {
                    for &pm in &MASK_PERCENTS {
                        grid.push(MaeConfig::new(l, pz, lh, cell, pm));
                    }
                }
            }
        }
    }
    grid
}
