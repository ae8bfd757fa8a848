//! Ranking, baseline deltas, per-dimension medians, box-plot summaries and
//! Pearson correlations over a finished ledger.

use serde::Serialize;

use super::{ModelTag, RunRecord};
use crate::error::{Error, Result};
use crate::mae::MaeConfig;
use crate::nn::CellKind;

/// Records sorted by test MAE ascending, ties broken by canonical name.
/// Records without a finite MAE go last.
pub fn rank(records: &[RunRecord]) -> Vec<&RunRecord> {
    let mut out: Vec<&RunRecord> = records.iter().collect();
    out.sort_by(|a, b| {
        let key = |r: &RunRecord| if r.test_mae.is_finite() { r.test_mae } else { f64::INFINITY };
        key(a)
            .total_cmp(&key(b))
            .then_with(|| a.name().cmp(&b.name()))
    });
    out
}

/// Relative change `(model - baseline) / baseline`.
pub fn percent_delta(model: f64, baseline: f64) -> f64 {
    (model - baseline) / baseline
}

pub fn baseline(records: &[RunRecord], cell: CellKind) -> Option<&RunRecord> {
    records.iter().find(|r| r.tag == ModelTag::Baseline(cell))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedRow {
    pub rank: usize,
    pub name: String,
    pub test_mae: f64,
    pub test_rmse: f64,
    pub delta_vs_lstm: f64,
    pub delta_vs_gru: f64,
    pub nan: bool,
}

/// The ranking table with deltas against both baselines.
pub fn rank_and_compare(records: &[RunRecord]) -> Result<Vec<RankedRow>> {
    let lstm = baseline(records, CellKind::Lstm).ok_or(Error::MissingBaseline("LSTM"))?;
    let gru = baseline(records, CellKind::Gru).ok_or(Error::MissingBaseline("GRU"))?;
    if !records.iter().any(|r| !r.tag.is_baseline()) {
        return Err(Error::Empty("autoencoder records"));
    }
    Ok(rank(records)
        .into_iter()
        .enumerate()
        .map(|(i, r)| RankedRow {
            rank: i + 1,
            name: r.name(),
            test_mae: r.test_mae,
            test_rmse: r.test_rmse,
            delta_vs_lstm: percent_delta(r.test_mae, lstm.test_mae),
            delta_vs_gru: percent_delta(r.test_mae, gru.test_mae),
            nan: r.nan,
        })
        .collect())
}

/// Median of a non-empty sample; an even count averages the central pair.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(v[n / 2]),
        _ => Some((v[n / 2 - 1] + v[n / 2]) / 2.0),
    }
}

/// Linear-interpolation quantile of sorted data (`q` in `[0, 1]`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Pearson correlation; `None` when undefined (fewer than two points or a
/// constant variable).
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let r = sxy / (sxx * syy).sqrt();
    (sxx > 0.0 && syy > 0.0 && r.is_finite()).then(|| r.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    EncoderDepth,
    LatentPercent,
    HeaderDepth,
    Cell,
    MaskPercent,
}

impl Dimension {
    pub const ALL: [Dimension; 5] = [
        Dimension::EncoderDepth,
        Dimension::LatentPercent,
        Dimension::HeaderDepth,
        Dimension::Cell,
        Dimension::MaskPercent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Dimension::EncoderDepth => "encoder_depth",
            Dimension::LatentPercent => "latent_percent",
            Dimension::HeaderDepth => "header_depth",
            Dimension::Cell => "is_gru",
            Dimension::MaskPercent => "mask_percent",
        }
    }

    /// Numeric code used for correlations. The cell is coded LSTM = 0, GRU = 1.
    pub fn code(self, c: &MaeConfig) -> f64 {
        match self {
            Dimension::EncoderDepth => c.encoder_depth as f64,
            Dimension::LatentPercent => c.latent_percent as f64,
            Dimension::HeaderDepth => c.header_depth as f64,
            Dimension::Cell => f64::from(u8::from(c.cell == CellKind::Gru)),
            Dimension::MaskPercent => c.mask_percent as f64,
        }
    }

    pub fn level_label(self, c: &MaeConfig) -> String {
        match self {
            Dimension::Cell => c.cell.to_string(),
            _ => format!("{}", self.code(c)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxStats {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Most extreme points within 1.5 IQR of the quartiles.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&v, 0.25);
    let q3 = quantile_sorted(&v, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = v.iter().copied().filter(|x| (lo..=hi).contains(x)).collect();
    Some(BoxStats {
        n: v.len(),
        min: v[0],
        q1,
        median: median(&v)?,
        q3,
        max: v[v.len() - 1],
        whisker_low: inside.first().copied().unwrap_or(v[0]),
        whisker_high: inside.last().copied().unwrap_or(v[v.len() - 1]),
        outliers: v.iter().copied().filter(|x| !(lo..=hi).contains(x)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelStats {
    pub level: String,
    pub code: f64,
    pub median_test_mae: f64,
    pub test_mae: BoxStats,
    pub beats_lstm: usize,
    pub beats_gru: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionStats {
    pub dimension: Dimension,
    pub levels: Vec<LevelStats>,
    /// Pearson r of the coded dimension against each metric.
    pub correlations: Vec<(String, Option<f64>)>,
}

/// Metrics correlated against the design dimensions.
pub const METRICS: [&str; 4] = ["test_mae", "test_rmse", "val_mae", "is_better_gru"];

fn valid_mae(records: &[RunRecord]) -> Vec<(&MaeConfig, &RunRecord)> {
    records
        .iter()
        .filter(|r| r.is_valid())
        .filter_map(|r| r.tag.config().map(|c| (c, r)))
        .collect()
}

fn metric_values(rows: &[(&MaeConfig, &RunRecord)], gru_mae: Option<f64>) -> Vec<Vec<f64>> {
    vec![
        rows.iter().map(|(_, r)| r.test_mae).collect(),
        rows.iter().map(|(_, r)| r.test_rmse).collect(),
        rows.iter().map(|(_, r)| r.val_mae).collect(),
        rows.iter()
            .map(|(_, r)| match gru_mae {
                Some(g) => f64::from(u8::from(r.test_mae < g)),
                None => f64::NAN,
            })
            .collect(),
    ]
}

/// Per-dimension level statistics and correlations over valid autoencoder
/// records. NaN-flagged runs are excluded.
pub fn dimension_analysis(records: &[RunRecord]) -> Result<Vec<DimensionStats>> {
    let rows = valid_mae(records);
    if rows.is_empty() {
        return Err(Error::Empty("valid autoencoder records"));
    }
    let lstm = baseline(records, CellKind::Lstm).filter(|r| r.is_valid()).map(|r| r.test_mae);
    let gru = baseline(records, CellKind::Gru).filter(|r| r.is_valid()).map(|r| r.test_mae);
    let metrics = metric_values(&rows, gru);
    let mut out = Vec::new();
    for dim in Dimension::ALL {
        let mut codes: Vec<f64> = rows.iter().map(|(c, _)| dim.code(c)).collect();
        let x = codes.clone();
        codes.sort_by(f64::total_cmp);
        codes.dedup();
        let levels = codes
            .iter()
            .map(|&code| {
                let members: Vec<&(&MaeConfig, &RunRecord)> =
                    rows.iter().filter(|(c, _)| dim.code(c) == code).collect();
                let maes: Vec<f64> = members.iter().map(|(_, r)| r.test_mae).collect();
                let beats = |b: Option<f64>| b.map_or(0, |b| maes.iter().filter(|&&m| m < b).count());
                let stats = box_stats(&maes).expect("level has members");
                LevelStats {
                    level: dim.level_label(members[0].0),
                    code,
                    median_test_mae: stats.median,
                    test_mae: stats,
                    beats_lstm: beats(lstm),
                    beats_gru: beats(gru),
                }
            })
            .collect();
        let correlations = METRICS
            .iter()
            .zip(&metrics)
            .map(|(name, y)| (name.to_string(), pearson(&x, y)))
            .collect();
        out.push(DimensionStats {
            dimension: dim,
            levels,
            correlations,
        });
    }
    Ok(out)
}

/// Symmetric correlation matrix over the five coded dimensions and the
/// metrics, in that order. Undefined entries are `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

pub fn correlation_matrix(records: &[RunRecord]) -> CorrelationMatrix {
    let rows = valid_mae(records);
    let gru = baseline(records, CellKind::Gru).filter(|r| r.is_valid()).map(|r| r.test_mae);
    let mut names: Vec<String> = Dimension::ALL.iter().map(|d| d.name().to_string()).collect();
    let mut columns: Vec<Vec<f64>> = Dimension::ALL
        .iter()
        .map(|d| rows.iter().map(|(c, _)| d.code(c)).collect())
        .collect();
    names.extend(METRICS.iter().map(|m| m.to_string()));
    columns.extend(metric_values(&rows, gru));
    let values = columns
        .iter()
        .map(|a| columns.iter().map(|b| pearson(a, b)).collect())
        .collect();
    CorrelationMatrix { names, values }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_fixture() {
        let d_gru = percent_delta(0.02085, 0.02599);
        let d_lstm = percent_delta(0.02085, 0.01959);
        assert_eq!(format!("{:.1}", d_gru * 100.0), "-19.8");
        assert_eq!(format!("{:.1}", d_lstm * 100.0), "6.4");
        assert_eq!(percent_delta(0.3, 0.3), 0.0);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[0.02, 0.04]), Some(0.03));
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn pearson_basics() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[3.0, 2.0, 1.0]), None);
    }

    #[test]
    fn box_whiskers() {
        let b = box_stats(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!((b.q1, b.median, b.q3), (2.0, 3.0, 4.0));
        assert_eq!(b.outliers, vec![100.0]);
        assert_eq!((b.whisker_low, b.whisker_high), (1.0, 4.0));
    }
}
