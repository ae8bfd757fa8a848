//! Segment-level min-max normalization, stride-1 window extraction with
//! window-mean labels, well balancing, subsampling and stratified splits.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use ndarray::{s, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ChannelRole, ChannelSpec};
use crate::rng::{derive_seed, rng_from};
use crate::segmentation::DrillingSegment;

pub mod cache;

/// Per-channel global extrema over the union of all segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub channels: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormalizationStats {
    pub fn index(&self, name: &str) -> Result<usize> {
        self.channels
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::MissingChannel(name.to_string()))
    }

    /// Min-max scaling; a degenerate channel (`min == max`) maps to 0.
    pub fn normalize(&self, channel: usize, x: f64) -> f64 {
        let (lo, hi) = (self.min[channel], self.max[channel]);
        if hi > lo {
            (x - lo) / (hi - lo)
        } else {
            0.0
        }
    }

    pub fn denormalize(&self, channel: usize, v: f64) -> f64 {
        let (lo, hi) = (self.min[channel], self.max[channel]);
        lo + v * (hi - lo)
    }

    pub fn degenerate_channels(&self) -> Vec<&str> {
        self.channels
            .iter()
            .zip(self.min.iter().zip(&self.max))
            .filter(|(_, (lo, hi))| lo >= hi)
            .map(|(c, _)| c.as_str())
            .collect()
    }
}

pub fn fit_stats(segments: &[DrillingSegment]) -> Result<NormalizationStats> {
    let first = segments.first().ok_or(Error::Empty("segment list"))?;
    let channels: Vec<String> = first.channels.iter().map(|c| c.spec.name.clone()).collect();
    let mut min = vec![f64::INFINITY; channels.len()];
    let mut max = vec![f64::NEG_INFINITY; channels.len()];
    for seg in segments {
        if seg.channels.len() != channels.len()
            || seg.channels.iter().zip(&channels).any(|(c, n)| &c.spec.name != n)
        {
            return Err(Error::shape(
                format!("channels {channels:?}"),
                format!("segment at {} of well {}", seg.start_index, seg.well_id),
            ));
        }
        for (k, c) in seg.channels.iter().enumerate() {
            for &v in &c.values {
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("segment channel `{}`", c.spec.name)));
                }
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            }
        }
    }
    if min.iter().any(|m| m.is_infinite()) {
        return Err(Error::Empty("segment samples"));
    }
    Ok(NormalizationStats { channels, min, max })
}

/// Which channels feed the model and which one is the label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowLayout {
    pub inputs: Vec<String>,
    pub target: String,
}

impl WindowLayout {
    pub fn from_specs(specs: &[ChannelSpec]) -> Result<Self> {
        crate::ingest::check_channel_specs(specs)?;
        Ok(Self {
            inputs: specs
                .iter()
                .filter(|s| s.role == ChannelRole::Input)
                .map(|s| s.name.clone())
                .collect(),
            target: specs
                .iter()
                .find(|s| s.role == ChannelRole::Target)
                .map(|s| s.name.clone())
                .expect("checked above"),
        })
    }

    pub fn features(&self) -> usize {
        self.inputs.len()
    }
}

/// Normalized input matrix of one segment (or of one cached window).
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentData {
    pub well_id: Arc<str>,
    pub segment_id: usize,
    /// Shape (T, F), target channel excluded.
    pub inputs: Array2<f32>,
}

#[derive(Debug, Clone)]
pub struct LabeledWindow {
    data: Arc<SegmentData>,
    row: usize,
    len: usize,
    /// Offset of the window start within its source segment.
    pub offset: usize,
    pub label: f32,
}

/// Identity of a window: (well, segment id, offset).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WindowId {
    pub well_id: Arc<str>,
    pub segment_id: usize,
    pub offset: usize,
}

impl LabeledWindow {
    pub(crate) fn standalone(
        well_id: Arc<str>,
        segment_id: usize,
        offset: usize,
        inputs: Array2<f32>,
        label: f32,
    ) -> Self {
        let len = inputs.nrows();
        Self {
            data: Arc::new(SegmentData {
                well_id,
                segment_id,
                inputs,
            }),
            row: 0,
            len,
            offset,
            label,
        }
    }

    pub fn inputs(&self) -> ArrayView2<'_, f32> {
        self.data.inputs.slice(s![self.row..self.row + self.len, ..])
    }

    pub fn well_id(&self) -> &str {
        &self.data.well_id
    }

    pub fn segment_id(&self) -> usize {
        self.data.segment_id
    }

    pub fn id(&self) -> WindowId {
        WindowId {
            well_id: self.data.well_id.clone(),
            segment_id: self.data.segment_id,
            offset: self.offset,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// A window stripped of its label. Self-supervised code paths only ever
/// receive these.
#[derive(Debug, Clone)]
pub struct UnlabeledWindow {
    data: Arc<SegmentData>,
    row: usize,
    len: usize,
    offset: usize,
}

impl UnlabeledWindow {
    pub fn inputs(&self) -> ArrayView2<'_, f32> {
        self.data.inputs.slice(s![self.row..self.row + self.len, ..])
    }

    pub fn id(&self) -> WindowId {
        WindowId {
            well_id: self.data.well_id.clone(),
            segment_id: self.data.segment_id,
            offset: self.offset,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

impl From<&LabeledWindow> for UnlabeledWindow {
    fn from(w: &LabeledWindow) -> Self {
        Self {
            data: w.data.clone(),
            row: w.row,
            len: w.len,
            offset: w.offset,
        }
    }
}

impl WindowId {
    /// Stable 64-bit key, used to derive per-window random streams.
    pub fn key(&self) -> u64 {
        crate::rng::fnv1a(format!("{}/{}/{}", self.well_id, self.segment_id, self.offset).as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Validation,
    Test,
    Unsplit,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Validation => "validation",
            SplitTag::Test => "test",
            SplitTag::Unsplit => "unsplit",
        }
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        [SplitTag::Train, SplitTag::Validation, SplitTag::Test, SplitTag::Unsplit]
            .get(c as usize)
            .copied()
    }
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct WindowSet {
    pub windows: Vec<LabeledWindow>,
    pub stats: Arc<NormalizationStats>,
    pub layout: Arc<WindowLayout>,
    pub split: SplitTag,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn window_len(&self) -> usize {
        self.windows.first().map_or(0, LabeledWindow::len)
    }

    pub fn features(&self) -> usize {
        self.layout.features()
    }

    pub fn labels(&self) -> Vec<f32> {
        self.windows.iter().map(|w| w.label).collect()
    }

    pub fn ids(&self) -> Vec<WindowId> {
        self.windows.iter().map(LabeledWindow::id).collect()
    }

    pub fn unlabeled(&self) -> Vec<UnlabeledWindow> {
        self.windows.iter().map(UnlabeledWindow::from).collect()
    }
}

/// Normalizes one segment's input channels and the target channel.
/// Returns the shared input matrix and the normalized target sequence.
pub fn normalize_segment(
    seg: &DrillingSegment,
    segment_id: usize,
    stats: &NormalizationStats,
    layout: &WindowLayout,
) -> Result<(Arc<SegmentData>, Vec<f64>)> {
    let t = seg.len();
    let mut inputs = Array2::<f32>::zeros((t, layout.features()));
    for (f, name) in layout.inputs.iter().enumerate() {
        let k = stats.index(name)?;
        let values = &seg.channel(name)?.values;
        for (i, &v) in values.iter().enumerate() {
            inputs[[i, f]] = stats.normalize(k, v) as f32;
        }
    }
    let k = stats.index(&layout.target)?;
    let target = seg
        .channel(&layout.target)?
        .values
        .iter()
        .map(|&v| stats.normalize(k, v))
        .collect();
    let data = SegmentData {
        well_id: Arc::from(seg.well_id.as_str()),
        segment_id,
        inputs,
    };
    Ok((Arc::new(data), target))
}

/// Windows `S[i .. i + window_len]` for `i = 0, stride, ..` up to `T - window_len`.
/// The label is the mean of the normalized target over the window.
pub fn extract_windows(
    data: &Arc<SegmentData>,
    target: &[f64],
    window_len: usize,
    stride: usize,
) -> Vec<LabeledWindow> {
    let t = data.inputs.nrows();
    if window_len == 0 || stride == 0 || t < window_len {
        return Vec::new();
    }
    (0..=t - window_len)
        .step_by(stride)
        .map(|i| {
            let mean = target[i..i + window_len].iter().sum::<f64>() / window_len as f64;
            LabeledWindow {
                data: data.clone(),
                row: i,
                len: window_len,
                offset: i,
                label: mean as f32,
            }
        })
        .collect()
}

/// Each well's windows are shuffled with one seeded generator (in well-id
/// order), truncated to the shortest well, then concatenated.
pub fn balance_wells(
    per_well: BTreeMap<String, Vec<LabeledWindow>>,
    seed: u64,
) -> Vec<LabeledWindow> {
    let mut rng = rng_from(seed);
    let keep = per_well.values().map(Vec::len).min().unwrap_or(0);
    let mut out = Vec::with_capacity(keep * per_well.len());
    for (_, mut windows) in per_well {
        windows.shuffle(&mut rng);
        windows.truncate(keep);
        out.extend(windows);
    }
    out
}

fn floor_count(n: usize, frac: f64) -> usize {
    // guard against products like 0.7 * 10 = 6.999..
    ((n as f64 * frac) + 1e-9).floor().min(n as f64) as usize
}

fn check_fraction(name: &'static str, f: f64) -> Result<()> {
    if f > 0.0 && f <= 1.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("{f} not in (0, 1]")))
    }
}

/// Partitions `windows` (already in random order) into a first part of
/// exactly `n_first` items and the remainder, stratified by well: per-well
/// quotas follow largest-remainder apportionment.
fn stratified_partition(
    windows: Vec<LabeledWindow>,
    n_first: usize,
) -> (Vec<LabeledWindow>, Vec<LabeledWindow>) {
    let total = windows.len();
    let mut counts: BTreeMap<Arc<str>, usize> = BTreeMap::new();
    for w in &windows {
        *counts.entry(w.data.well_id.clone()).or_default() += 1;
    }
    let mut quota: BTreeMap<Arc<str>, usize> = BTreeMap::new();
    let mut remainders = Vec::new();
    let mut assigned = 0;
    for (well, &n) in &counts {
        let exact = n as f64 * n_first as f64 / total as f64;
        let q = exact.floor() as usize;
        assigned += q;
        quota.insert(well.clone(), q);
        remainders.push((exact - q as f64, well.clone()));
    }
    // largest fractional part first, ties by well id
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    for (_, well) in remainders.into_iter().take(n_first.saturating_sub(assigned)) {
        *quota.get_mut(&well).unwrap() += 1;
    }
    let (mut first, mut rest) = (Vec::new(), Vec::new());
    for w in windows {
        let q = quota.get_mut(&w.data.well_id).unwrap();
        if *q > 0 {
            *q -= 1;
            first.push(w);
        } else {
            rest.push(w);
        }
    }
    (first, rest)
}

/// Takes a seeded random subset of `floor(N * subsample)` windows, then a
/// well-stratified split of `floor(M * (1 - test))` train windows and the
/// remainder as test.
pub fn subsample_and_split(
    pool: Vec<LabeledWindow>,
    stats: Arc<NormalizationStats>,
    layout: Arc<WindowLayout>,
    subsample_frac: f64,
    test_frac: f64,
    seed: u64,
) -> Result<(WindowSet, WindowSet)> {
    check_fraction("subsample", subsample_frac)?;
    check_fraction("test", test_frac)?;
    let mut pool = pool;
    pool.shuffle(&mut rng_from(derive_seed(seed, "subsample")));
    pool.truncate(floor_count(pool.len(), subsample_frac));
    let n_train = floor_count(pool.len(), 1.0 - test_frac);
    let (train, test) = stratified_partition(pool, n_train);
    if train.is_empty() || test.is_empty() {
        return Err(Error::param(
            "test",
            format!("split leaves {} train and {} test windows", train.len(), test.len()),
        ));
    }
    let make = |windows, split| WindowSet {
        windows,
        stats: stats.clone(),
        layout: layout.clone(),
        split,
    };
    Ok((make(train, SplitTag::Train), make(test, SplitTag::Test)))
}

/// Carves a seeded, well-stratified validation subset out of a train split.
pub fn carve_validation(train: WindowSet, frac: f64, seed: u64) -> Result<(WindowSet, WindowSet)> {
    check_fraction("validation", frac)?;
    let mut windows = train.windows;
    windows.shuffle(&mut rng_from(derive_seed(seed, "validation")));
    let n_val = floor_count(windows.len(), frac).max(1);
    let (val, rest) = stratified_partition(windows, n_val);
    if rest.is_empty() {
        return Err(Error::param("validation", "no training windows left"));
    }
    let make = |windows, split| WindowSet {
        windows,
        stats: train.stats.clone(),
        layout: train.layout.clone(),
        split,
    };
    Ok((make(rest, SplitTag::Train), make(val, SplitTag::Validation)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowParams {
    pub window_len: usize,
    pub stride: usize,
    pub subsample: f64,
    pub test: f64,
    pub validation: f64,
}

impl Default for WindowParams {
    fn default() -> Self {
        Self {
            window_len: 600,
            stride: 1,
            subsample: 0.2,
            test: 0.2,
            validation: 0.1,
        }
    }
}

/// Train / validation / test windows sharing one set of statistics.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: WindowSet,
    pub validation: WindowSet,
    pub test: WindowSet,
    pub stats: Arc<NormalizationStats>,
}

/// Full window pipeline: stats over every segment of every well, windows
/// per segment, balancing, subsampling, the train/test split and the
/// validation carve.
pub fn prepare(
    per_well: &BTreeMap<String, Vec<DrillingSegment>>,
    layout: &WindowLayout,
    params: &WindowParams,
    seed: u64,
) -> Result<PreparedData> {
    if params.window_len == 0 || params.stride == 0 {
        return Err(Error::param("window", "length and stride must be positive"));
    }
    let all: Vec<DrillingSegment> = per_well.values().flatten().cloned().collect();
    let stats = Arc::new(fit_stats(&all)?);
    let layout = Arc::new(layout.clone());

    let mut numbered = Vec::new();
    for (well, segs) in per_well {
        for seg in segs {
            numbered.push((well.clone(), numbered.len(), seg));
        }
    }
    let extracted = numbered
        .par_iter()
        .map(|(well, id, seg)| {
            let (data, target) = normalize_segment(seg, *id, &stats, &layout)?;
            Ok((well.clone(), extract_windows(&data, &target, params.window_len, params.stride)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grouped: BTreeMap<String, Vec<LabeledWindow>> =
        per_well.keys().map(|k| (k.clone(), Vec::new())).collect();
    for (well, windows) in extracted {
        grouped.get_mut(&well).unwrap().extend(windows);
    }
    if let Some((well, _)) = grouped.iter().find(|(_, w)| w.is_empty()) {
        return Err(Error::param(
            "window_len",
            format!("well {well} has no segment of at least {} samples", params.window_len),
        ));
    }
    let pool = balance_wells(grouped, derive_seed(seed, "balance"));
    let (train, test) =
        subsample_and_split(pool, stats.clone(), layout, params.subsample, params.test, seed)?;
    let (train, validation) = carve_validation(train, params.validation, seed)?;
    Ok(PreparedData {
        train,
        validation,
        test,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Channel;

    fn segment(well: &str, start: usize, cols: &[(&str, Vec<f64>)]) -> DrillingSegment {
        let len = cols[0].1.len();
        DrillingSegment {
            well_id: well.into(),
            start_index: start,
            indices: (start..start + len).collect(),
            channels: cols
                .iter()
                .map(|(n, v)| Channel {
                    spec: ChannelSpec::input(*n),
                    values: v.clone(),
                })
                .collect(),
        }
    }

    #[test]
    fn stats_extrema() {
        let s = fit_stats(&[segment("a", 0, &[("x", vec![2.0, 4.0, 6.0])])]).unwrap();
        assert_eq!((s.min[0], s.max[0]), (2.0, 6.0));
        let s = fit_stats(&[
            segment("a", 0, &[("x", vec![0.0, 1.0])]),
            segment("b", 0, &[("x", vec![5.0, 9.0])]),
        ])
        .unwrap();
        assert_eq!((s.min[0], s.max[0]), (0.0, 9.0));
        let s = fit_stats(&[segment("a", 0, &[("x", vec![3.0, 3.0])])]).unwrap();
        assert_eq!((s.min[0], s.max[0]), (3.0, 3.0));
        assert_eq!(s.degenerate_channels(), vec!["x"]);
        assert_eq!(s.normalize(0, 3.0), 0.0);
        assert!(fit_stats(&[]).is_err());
    }

    fn layout() -> WindowLayout {
        WindowLayout {
            inputs: vec!["x".into()],
            target: "y".into(),
        }
    }

    fn windows_of(len: usize, y: f64) -> Vec<LabeledWindow> {
        let seg = segment(
            "a",
            0,
            &[("x", (0..len).map(|i| i as f64).collect()), ("y", vec![y; len])],
        );
        let mut stats = fit_stats(std::slice::from_ref(&seg)).unwrap();
        stats.min[1] = 0.0;
        stats.max[1] = 1.0;
        let (data, target) = normalize_segment(&seg, 0, &stats, &layout()).unwrap();
        extract_windows(&data, &target, 600, 1)
    }

    #[test]
    fn window_counts() {
        assert_eq!(windows_of(600, 0.5).len(), 1);
        assert_eq!(windows_of(605, 0.5).len(), 6);
        assert!(windows_of(599, 0.5).is_empty());
        let w = windows_of(605, 0.7);
        assert!((w[3].label - 0.7).abs() < 1e-7);
        assert_eq!(w[3].offset, 3);
        assert_eq!(w[3].inputs().dim(), (600, 1));
        assert_eq!(w[3].inputs()[[0, 0]], (3.0 / 604.0) as f32);
    }

    fn fake(well: &str, n: usize) -> Vec<LabeledWindow> {
        (0..n)
            .map(|i| LabeledWindow::standalone(Arc::from(well), 0, i, Array2::zeros((2, 1)), 0.0))
            .collect()
    }

    #[test]
    fn balancing_truncates_to_shortest() {
        let mut m = BTreeMap::new();
        m.insert("a".to_string(), fake("a", 100));
        m.insert("b".to_string(), fake("b", 60));
        let out = balance_wells(m, 1);
        assert_eq!(out.len(), 120);
        assert_eq!(out.iter().filter(|w| w.well_id() == "a").count(), 60);

        let mut m = BTreeMap::new();
        m.insert("a".to_string(), fake("a", 10));
        let out = balance_wells(m, 3);
        let mut offsets: Vec<usize> = out.iter().map(|w| w.offset).collect();
        assert_ne!(offsets, (0..10).collect::<Vec<_>>());
        offsets.sort();
        assert_eq!(offsets, (0..10).collect::<Vec<_>>());
    }

    fn stats_and_layout() -> (Arc<NormalizationStats>, Arc<WindowLayout>) {
        let stats = NormalizationStats {
            channels: vec!["x".into(), "y".into()],
            min: vec![0.0, 0.0],
            max: vec![1.0, 1.0],
        };
        (Arc::new(stats), Arc::new(layout()))
    }

    #[test]
    fn split_arithmetic() {
        let (st, la) = stats_and_layout();
        let mut pool = fake("a", 500);
        pool.extend(fake("b", 500));
        let (train, test) =
            subsample_and_split(pool.clone(), st.clone(), la.clone(), 0.2, 0.2, 9).unwrap();
        assert_eq!((train.len(), test.len()), (160, 40));
        let (train2, _) = subsample_and_split(pool, st.clone(), la.clone(), 0.2, 0.2, 9).unwrap();
        assert_eq!(train.ids(), train2.ids());

        let (train, test) =
            subsample_and_split(fake("a", 10), st.clone(), la.clone(), 1.0, 0.2, 1).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        assert!(subsample_and_split(fake("a", 3), st, la, 0.5, 0.2, 1).is_err());
    }

    #[test]
    fn split_is_stratified_by_well() {
        let (st, la) = stats_and_layout();
        let mut pool = fake("a", 101);
        pool.extend(fake("b", 99));
        let (train, test) = subsample_and_split(pool, st, la, 1.0, 0.2, 4).unwrap();
        assert_eq!(train.len(), 160);
        let a_train = train.windows.iter().filter(|w| w.well_id() == "a").count();
        assert!((80..=81).contains(&a_train), "{a_train}");
        let a_test = test.windows.iter().filter(|w| w.well_id() == "a").count();
        assert_eq!(a_train + a_test, 101);
    }

    #[test]
    fn validation_carve() {
        let (st, la) = stats_and_layout();
        let mut pool = fake("a", 50);
        pool.extend(fake("b", 50));
        let (train, _) = subsample_and_split(pool, st, la, 1.0, 0.2, 2).unwrap();
        let (rest, val) = carve_validation(train, 0.1, 2).unwrap();
        assert_eq!((rest.len(), val.len()), (72, 8));
        assert_eq!(val.split, SplitTag::Validation);
    }
}
