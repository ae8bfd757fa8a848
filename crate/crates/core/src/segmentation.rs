//! Isolation of sustained active-drilling intervals.
//!
//! Three stages: a per-sample drilling indicator, two trailing rolling-mean
//! smoothing passes, then grouping of retained samples into runs with
//! within-run imputation of missing readings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Channel, WellSeries, BIT_DEPTH, HOLE_DEPTH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationParams {
    pub long_window: usize,
    pub short_window: usize,
    pub short_threshold: f64,
    pub block_window: usize,
    pub block_threshold: f64,
    pub min_depth: f64,
    pub gap_limit: usize,
    pub impute_window: usize,
    /// Absolute tolerance for the on-bottom test `|HD - BD| <= tol`.
    pub depth_tolerance: f64,
    pub hole_depth: String,
    pub bit_depth: String,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self {
            long_window: 10_000,
            short_window: 100,
            short_threshold: 0.3,
            block_window: 20_000,
            block_threshold: 0.6,
            min_depth: 1000.0,
            gap_limit: 100,
            impute_window: 100,
            depth_tolerance: 0.01,
            hole_depth: HOLE_DEPTH.to_string(),
            bit_depth: BIT_DEPTH.to_string(),
        }
    }
}

/// Upper bound on the long window so the exact rolling sums cannot overflow.
pub const MAX_LONG_WINDOW: usize = 1 << 27;

impl SegmentationParams {
    pub fn validate(&self) -> Result<()> {
        let windows = [
            ("long_window", self.long_window),
            ("short_window", self.short_window),
            ("block_window", self.block_window),
            ("impute_window", self.impute_window),
            ("gap_limit", self.gap_limit),
        ];
        for (name, w) in windows {
            if w == 0 {
                return Err(Error::param(name, "must be at least 1"));
            }
        }
        if self.long_window > MAX_LONG_WINDOW {
            return Err(Error::param("long_window", format!("must be at most {MAX_LONG_WINDOW}")));
        }
        for (name, t) in [
            ("short_threshold", self.short_threshold),
            ("block_threshold", self.block_threshold),
        ] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::param(name, format!("{t} not in (0, 1)")));
            }
        }
        if !(self.depth_tolerance >= 0.0) {
            return Err(Error::param("depth_tolerance", "must be non-negative"));
        }
        if !self.min_depth.is_finite() {
            return Err(Error::param("min_depth", "must be finite"));
        }
        Ok(())
    }
}

/// One contiguous drilling interval, fully finite after imputation.
#[derive(Debug, Clone, PartialEq)]
pub struct DrillingSegment {
    pub well_id: String,
    pub start_index: usize,
    /// Parent-series index of every sample in the segment.
    pub indices: Vec<usize>,
    pub channels: Vec<Channel>,
}

impl DrillingSegment {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn end_index(&self) -> usize {
        self.indices.last().copied().unwrap_or(self.start_index)
    }

    pub fn channel(&self, name: &str) -> Result<&Channel> {
        self.channels
            .iter()
            .find(|c| c.spec.name == name)
            .ok_or_else(|| Error::MissingChannel(name.to_string()))
    }
}

// Depth values are mapped to integers on a 2^-32 grid so the rolling-mean
// derivative sign is decided exactly. |depth| must stay below 2^40.
const DEPTH_SCALE: f64 = 4_294_967_296.0;
const DEPTH_LIMIT: f64 = 1_099_511_627_776.0;

pub(crate) fn quantize_depth(x: f64) -> Option<i128> {
    (x.is_finite() && x.abs() < DEPTH_LIMIT).then(|| (x * DEPTH_SCALE).round() as i128)
}

/// `out[t]` is true iff the trailing rolling mean (partial windows at the
/// start, missing values skipped) increased from `t-1` to `t`.
fn rolling_mean_rising(values: &[f64], window: usize) -> Vec<bool> {
    let q: Vec<Option<i128>> = values.iter().map(|&v| quantize_depth(v)).collect();
    let mut out = vec![false; q.len()];
    let (mut sum, mut count) = (0i128, 0i128);
    let (mut prev_sum, mut prev_count) = (0i128, 0i128);
    for t in 0..q.len() {
        if let Some(v) = q[t] {
            sum += v;
            count += 1;
        }
        if t >= window {
            if let Some(v) = q[t - window] {
                sum -= v;
                count -= 1;
            }
        }
        if t > 0 && count > 0 && prev_count > 0 {
            out[t] = sum * prev_count > prev_sum * count;
        }
        prev_sum = sum;
        prev_count = count;
    }
    out
}

/// Per-sample drilling indicator.
pub fn base_mask(s: &WellSeries, p: &SegmentationParams) -> Result<Vec<bool>> {
    p.validate()?;
    let hd = &s.channel(&p.hole_depth)?.values;
    let bd = &s.channel(&p.bit_depth)?.values;
    let rising = rolling_mean_rising(hd, p.long_window);
    Ok(rising
        .into_iter()
        .zip(hd.iter().zip(bd))
        .map(|(up, (&h, &b))| {
            up && h.is_finite()
                && b.is_finite()
                && (h - b).abs() <= p.depth_tolerance
                && h > p.min_depth
        })
        .collect())
}

/// Trailing rolling mean of a boolean sequence, thresholded strictly.
/// The first `window - 1` samples average over the available prefix.
pub fn rolling_fraction_above(m: &[bool], window: usize, threshold: f64) -> Vec<bool> {
    let mut out = Vec::with_capacity(m.len());
    let mut count = 0usize;
    for t in 0..m.len() {
        count += m[t] as usize;
        if t >= window {
            count -= m[t - window] as usize;
        }
        let n = (t + 1).min(window);
        out.push(count as f64 / n as f64 > threshold);
    }
    out
}

/// Two-pass smoothing. Pass 1 keeps an indicator sample only when the
/// trailing short-window mean exceeds its threshold (flicker removal); pass 2
/// marks every sample whose trailing block-window mean of the pass-1 output
/// exceeds the block threshold.
pub fn smooth_mask(m: &[bool], p: &SegmentationParams) -> Vec<bool> {
    let pass1: Vec<bool> = rolling_fraction_above(m, p.short_window, p.short_threshold)
        .into_iter()
        .zip(m)
        .map(|(dense, &on)| dense && on)
        .collect();
    rolling_fraction_above(&pass1, p.block_window, p.block_threshold)
}

/// Splits retained indices into runs wherever consecutive retained indices
/// are more than `gap_limit` apart. Dropped samples inside a small gap are
/// not re-added.
pub fn split_runs(keep: &[bool], gap_limit: usize) -> Vec<Vec<usize>> {
    let mut runs: Vec<Vec<usize>> = Vec::new();
    let mut last: Option<usize> = None;
    for (i, _) in keep.iter().enumerate().filter(|(_, &k)| k) {
        match last {
            Some(prev) if i - prev <= gap_limit => runs.last_mut().unwrap().push(i),
            _ => runs.push(vec![i]),
        }
        last = Some(i);
    }
    runs
}

/// Fills missing values: centered rolling mean over complete windows, then
/// backward fill, then forward fill. Returns `false` if nothing was finite.
pub fn impute(values: &mut [f64], window: usize) -> bool {
    let n = values.len();
    let missing: Vec<usize> = (0..n).filter(|&i| !values[i].is_finite()).collect();
    if missing.is_empty() {
        return true;
    }
    if missing.len() == n {
        return false;
    }
    let half = window / 2;
    let fills: Vec<(usize, f64)> = missing
        .iter()
        .filter_map(|&i| {
            let start = i.checked_sub(half)?;
            let end = start + window;
            if end > n {
                return None;
            }
            let (sum, count) = values[start..end]
                .iter()
                .filter(|v| v.is_finite())
                .fold((0.0, 0usize), |(s, c), &v| (s + v, c + 1));
            (count > 0).then(|| (i, sum / count as f64))
        })
        .collect();
    for (i, v) in fills {
        values[i] = v;
    }
    let mut next = f64::NAN;
    for v in values.iter_mut().rev() {
        if v.is_finite() {
            next = *v;
        } else {
            *v = next;
        }
    }
    let mut prev = f64::NAN;
    for v in values.iter_mut() {
        if v.is_finite() {
            prev = *v;
        } else {
            *v = prev;
        }
    }
    true
}

/// A run that could not be imputed because a channel had no finite value.
#[derive(Debug, Clone, PartialEq)]
pub struct DroppedRun {
    pub start_index: usize,
    pub len: usize,
    pub channel: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Segmentation {
    pub segments: Vec<DrillingSegment>,
    pub dropped: Vec<DroppedRun>,
}

pub fn group_segments_detailed(
    keep: &[bool],
    s: &WellSeries,
    p: &SegmentationParams,
) -> Result<Segmentation> {
    if keep.len() != s.len() {
        return Err(Error::shape(format!("mask of length {}", s.len()), keep.len().to_string()));
    }
    let mut out = Segmentation::default();
    'runs: for run in split_runs(keep, p.gap_limit) {
        let mut channels = Vec::with_capacity(s.channels.len());
        for c in &s.channels {
            let mut values: Vec<f64> = run.iter().map(|&i| c.values[i]).collect();
            if !impute(&mut values, p.impute_window) {
                out.dropped.push(DroppedRun {
                    start_index: run[0],
                    len: run.len(),
                    channel: c.spec.name.clone(),
                });
                continue 'runs;
            }
            channels.push(Channel { spec: c.spec.clone(), values });
        }
        out.segments.push(DrillingSegment {
            well_id: s.well_id.clone(),
            start_index: run[0],
            indices: run,
            channels,
        });
    }
    Ok(out)
}

pub fn group_segments(
    keep: &[bool],
    s: &WellSeries,
    p: &SegmentationParams,
) -> Result<Vec<DrillingSegment>> {
    group_segments_detailed(keep, s, p).map(|g| g.segments)
}

/// Final retained-sample mask of the first two stages.
pub fn drilling_mask(s: &WellSeries, p: &SegmentationParams) -> Result<Vec<bool>> {
    Ok(smooth_mask(&base_mask(s, p)?, p))
}

pub fn segment_well_detailed(s: &WellSeries, p: &SegmentationParams) -> Result<Segmentation> {
    let keep = drilling_mask(s, p)?;
    group_segments_detailed(&keep, s, p)
}

pub fn segment_well(s: &WellSeries, p: &SegmentationParams) -> Result<Vec<DrillingSegment>> {
    segment_well_detailed(s, p).map(|g| g.segments)
}
