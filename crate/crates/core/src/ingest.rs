//! Per-well telemetry loading and validation.
//!
//! Input files are delimited text with one header row. Every cell that is
//! empty or does not parse as a number becomes a missing value (`NaN`).

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default channel names used throughout the pipeline.
pub const HOLE_DEPTH: &str = "Hole Depth";
pub const BIT_DEPTH: &str = "Bit Depth";
pub const TOTAL_MUD_VOLUME: &str = "Total Mud Volume";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelRole {
    Input,
    Target,
    Auxiliary,
}

impl ChannelRole {
    pub fn as_str(self) -> &'static str {
        match self {
            ChannelRole::Input => "input",
            ChannelRole::Target => "target",
            ChannelRole::Auxiliary => "auxiliary",
        }
    }
}

impl std::str::FromStr for ChannelRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "input" => Ok(ChannelRole::Input),
            "target" => Ok(ChannelRole::Target),
            "auxiliary" | "aux" => Ok(ChannelRole::Auxiliary),
            other => Err(Error::ChannelSpec(format!("unknown role `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub name: String,
    pub role: ChannelRole,
}

impl ChannelSpec {
    pub fn new(name: impl Into<String>, role: ChannelRole) -> Self {
        Self {
            name: name.into(),
            role,
        }
    }

    pub fn input(name: impl Into<String>) -> Self {
        Self::new(name, ChannelRole::Input)
    }

    pub fn target(name: impl Into<String>) -> Self {
        Self::new(name, ChannelRole::Target)
    }

    pub fn auxiliary(name: impl Into<String>) -> Self {
        Self::new(name, ChannelRole::Auxiliary)
    }
}

/// The nine-channel layout used for the FORGE wells: five model inputs, the
/// mud-volume target and three auxiliary channels kept for diagnostics.
pub fn forge_channels() -> Vec<ChannelSpec> {
    vec![
        ChannelSpec::input("WOB"),
        ChannelSpec::input("ROP"),
        ChannelSpec::input("Total Pump Output"),
        ChannelSpec::input(HOLE_DEPTH),
        ChannelSpec::input(BIT_DEPTH),
        ChannelSpec::target(TOTAL_MUD_VOLUME),
        ChannelSpec::auxiliary("Rotary RPM"),
        ChannelSpec::auxiliary("Rotary Torque"),
        ChannelSpec::auxiliary("Standpipe Pressure"),
    ]
}

/// Checks the channel-spec invariants: exactly one target, unique names.
pub fn check_channel_specs(specs: &[ChannelSpec]) -> Result<()> {
    let targets = specs
        .iter()
        .filter(|s| s.role == ChannelRole::Target)
        .count();
    if targets != 1 {
        return Err(Error::ChannelSpec(format!(
            "expected exactly one target channel, found {targets}"
        )));
    }
    for (i, a) in specs.iter().enumerate() {
        if a.name.trim().is_empty() {
            return Err(Error::ChannelSpec("empty channel name".into()));
        }
        if specs[..i].iter().any(|b| b.name == a.name) {
            return Err(Error::ChannelSpec(format!("duplicate channel `{}`", a.name)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub spec: ChannelSpec,
    /// One value per sample; `NaN` marks a missing reading.
    pub values: Vec<f64>,
}

/// Raw multichannel 1 Hz telemetry for one well.
#[derive(Debug, Clone, PartialEq)]
pub struct WellSeries {
    pub well_id: String,
    /// Seconds. `None` means the row index is the time axis.
    pub timestamps: Option<Vec<f64>>,
    pub channels: Vec<Channel>,
}

impl WellSeries {
    pub fn new(well_id: impl Into<String>, channels: Vec<Channel>) -> Result<Self> {
        let series = Self {
            well_id: well_id.into(),
            timestamps: None,
            channels,
        };
        series.check()?;
        Ok(series)
    }

    fn check(&self) -> Result<()> {
        let len = self.channels.first().map_or(0, |c| c.values.len());
        if len == 0 {
            return Err(Error::Empty("well series"));
        }
        for c in &self.channels {
            if c.values.len() != len {
                return Err(Error::shape(
                    format!("{len} samples"),
                    format!("{} samples in `{}`", c.values.len(), c.spec.name),
                ));
            }
        }
        if let Some(ts) = &self.timestamps {
            if ts.len() != len {
                return Err(Error::shape(format!("{len} timestamps"), ts.len().to_string()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, |c| c.values.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, name: &str) -> Result<&Channel> {
        self.channels
            .iter()
            .find(|c| c.spec.name == name)
            .ok_or_else(|| Error::MissingChannel(name.to_string()))
    }

    pub fn channel_index(&self, name: &str) -> Result<usize> {
        self.channels
            .iter()
            .position(|c| c.spec.name == name)
            .ok_or_else(|| Error::MissingChannel(name.to_string()))
    }

    pub fn specs(&self) -> Vec<ChannelSpec> {
        self.channels.iter().map(|c| c.spec.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadOptions {
    pub delimiter: u8,
    /// Optional timestamp column; absent means row index is time.
    pub timestamp_column: Option<String>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            timestamp_column: None,
        }
    }
}

fn parse_cell(cell: &str) -> f64 {
    match cell.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => v,
        _ => f64::NAN,
    }
}

/// Loads one well file, keeping the requested channels in `specs` order.
pub fn load_well(
    well_id: &str,
    path: &Path,
    specs: &[ChannelSpec],
    opts: &LoadOptions,
) -> Result<WellSeries> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let column_of = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let columns = specs
        .iter()
        .map(|s| column_of(&s.name))
        .collect::<Result<Vec<_>>>()?;
    let ts_column = opts
        .timestamp_column
        .as_deref()
        .map(column_of)
        .transpose()?;

    let mut values: Vec<Vec<f64>> = vec![Vec::new(); specs.len()];
    let mut timestamps = ts_column.map(|_| Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        for (dst, &col) in values.iter_mut().zip(&columns) {
            dst.push(record.get(col).map_or(f64::NAN, parse_cell));
        }
        if let (Some(ts), Some(col)) = (timestamps.as_mut(), ts_column) {
            ts.push(record.get(col).map_or(f64::NAN, parse_cell));
        }
    }
    if values.first().map_or(true, Vec::is_empty) {
        return Err(Error::NoRows(path.to_path_buf()));
    }

    let channels = specs
        .iter()
        .cloned()
        .zip(values)
        .map(|(spec, values)| Channel { spec, values })
        .collect();
    let series = WellSeries {
        well_id: well_id.to_string(),
        timestamps,
        channels,
    };
    series.check()?;
    Ok(series)
}

/// Writes a series as comma-separated text with a header row; missing
/// values become empty cells.
pub fn write_well(series: &WellSeries, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header: Vec<&str> = Vec::new();
    if series.timestamps.is_some() {
        header.push("Time");
    }
    header.extend(series.channels.iter().map(|c| c.spec.name.as_str()));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    let cell = |v: f64| if v.is_finite() { v.to_string() } else { String::new() };
    for i in 0..series.len() {
        let mut row = Vec::with_capacity(header.len());
        if let Some(ts) = &series.timestamps {
            row.push(cell(ts[i]));
        }
        row.extend(series.channels.iter().map(|c| cell(c.values[i])));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    MissingValues { channel: String, count: usize },
    AllMissing { channel: String },
    ZeroVariance { channel: String, value: f64 },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::MissingValues { channel, count } => {
                write!(f, "warning: `{channel}` has {count} missing values")
            }
            Diagnostic::AllMissing { channel } => {
                write!(f, "error: `{channel}` has no finite values")
            }
            Diagnostic::ZeroVariance { channel, value } => {
                write!(f, "warning: `{channel}` has zero variance (constant {value})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSummary {
    pub name: String,
    pub role: ChannelRole,
    pub missing: usize,
    pub min: f64,
    pub max: f64,
}

pub fn summarize(s: &WellSeries) -> Vec<ChannelSummary> {
    s.channels
        .iter()
        .map(|c| {
            let (mut min, mut max, mut missing) = (f64::INFINITY, f64::NEG_INFINITY, 0);
            for &v in &c.values {
                if v.is_finite() {
                    min = min.min(v);
                    max = max.max(v);
                } else {
                    missing += 1;
                }
            }
            if min > max {
                min = f64::NAN;
                max = f64::NAN;
            }
            ChannelSummary {
                name: c.spec.name.clone(),
                role: c.spec.role,
                missing,
                min,
                max,
            }
        })
        .collect()
}

/// Reports per-channel problems. An all-finite, non-constant series yields
/// an empty list.
pub fn validate_series(s: &WellSeries) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for summary in summarize(s) {
        if summary.missing == s.len() {
            out.push(Diagnostic::AllMissing {
                channel: summary.name,
            });
            continue;
        }
        if summary.missing > 0 {
            out.push(Diagnostic::MissingValues {
                channel: summary.name.clone(),
                count: summary.missing,
            });
        }
        if summary.min == summary.max {
            out.push(Diagnostic::ZeroVariance {
                channel: summary.name,
                value: summary.min,
            });
        }
    }
    out
}

/// Human-readable validation report, as printed by the `ingest` command.
pub fn validation_report(s: &WellSeries) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(out, "well {}: {} samples, {} channels", s.well_id, s.len(), s.channels.len());
    let _ = writeln!(out, "channel,role,missing,min,max");
    for c in summarize(s) {
        let _ = writeln!(out, "{},{},{},{},{}", c.name, c.role.as_str(), c.missing, c.min, c.max);
    }
    let diags = validate_series(s);
    if diags.is_empty() {
        let _ = writeln!(out, "no diagnostics");
    }
    for d in diags {
        let _ = writeln!(out, "{d}");
    }
    out
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    fn write_file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn nine_column_file(rows: usize) -> String {
        let specs = forge_channels();
        let mut s = specs.iter().map(|c| c.name.as_str()).collect::<Vec<_>>().join(",");
        s.push('\n');
        for r in 0..rows {
            let row: Vec<String> = (0..specs.len()).map(|c| format!("{}", r * 10 + c)).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    #[test]
    fn loads_ten_rows_nine_channels() {
        let f = write_file(&nine_column_file(10));
        let s = load_well("w", f.path(), &forge_channels(), &LoadOptions::default()).unwrap();
        assert_eq!(s.len(), 10);
        assert_eq!(s.channels.len(), 9);
        assert_eq!(s.channel("ROP").unwrap().values[3], 31.0);
    }

    #[test]
    fn missing_column_is_an_error() {
        let f = write_file("WOB,ROP\n1,2\n");
        let err = load_well("w", f.path(), &forge_channels(), &LoadOptions::default()).unwrap_err();
        match err {
            Error::MissingColumn { column, .. } => assert_eq!(column, "Total Pump Output"),
            other => panic!("unexpected {other:?}"),
        }
        let f = write_file("WOB,Bit Depth\n1,2\n");
        let specs = [ChannelSpec::input("WOB"), ChannelSpec::input(HOLE_DEPTH)];
        assert!(matches!(
            load_well("w", f.path(), &specs, &LoadOptions::default()),
            Err(Error::MissingColumn { column, .. }) if column == HOLE_DEPTH
        ));
    }

    #[test]
    fn missing_file_and_empty_file() {
        let err = load_well("w", Path::new("/no/such/file.csv"), &forge_channels(), &LoadOptions::default());
        assert!(matches!(err, Err(Error::MissingFile(_))));
        let f = write_file(&nine_column_file(0));
        let err = load_well("w", f.path(), &forge_channels(), &LoadOptions::default());
        assert!(matches!(err, Err(Error::NoRows(_))));
    }

    #[test]
    fn non_numeric_cell_becomes_missing() {
        let f = write_file("a,b\n1,2\n3,4\nxx,6\n7,\n");
        let specs = [ChannelSpec::target("a"), ChannelSpec::input("b")];
        let s = load_well("w", f.path(), &specs, &LoadOptions::default()).unwrap();
        assert_eq!(s.len(), 4);
        assert!(s.channels[0].values[2].is_nan());
        assert!(s.channels[1].values[3].is_nan());
        let diags = validate_series(&s);
        assert!(diags.contains(&Diagnostic::MissingValues { channel: "a".into(), count: 1 }));
    }

    #[test]
    fn channel_order_follows_spec_not_file() {
        let f = write_file("c;b;a\n3;2;1\n6;5;4\n");
        let specs = [ChannelSpec::input("a"), ChannelSpec::input("b"), ChannelSpec::target("c")];
        let opts = LoadOptions { delimiter: b';', ..Default::default() };
        let s = load_well("w", f.path(), &specs, &opts).unwrap();
        assert_eq!(s.channels[0].values, vec![1.0, 4.0]);
        assert_eq!(s.channels[2].values, vec![3.0, 6.0]);
    }

    #[test]
    fn timestamps_are_optional() {
        let f = write_file("t,a\n0,1\n1,2\n");
        let specs = [ChannelSpec::target("a")];
        let opts = LoadOptions { timestamp_column: Some("t".into()), ..Default::default() };
        let s = load_well("w", f.path(), &specs, &opts).unwrap();
        assert_eq!(s.timestamps, Some(vec![0.0, 1.0]));
        let s = load_well("w", f.path(), &specs, &LoadOptions::default()).unwrap();
        assert_eq!(s.timestamps, None);
    }

    #[test]
    fn validation_cases() {
        let ch = |name: &str, values: Vec<f64>| Channel { spec: ChannelSpec::input(name), values };
        let s = WellSeries::new("w", vec![ch("a", vec![1.0, 2.0, 3.0])]).unwrap();
        assert!(validate_series(&s).is_empty());

        let mut v = vec![1.0; 10];
        v[1] = 2.0;
        for i in [0, 3, 4, 7, 9] {
            v[i] = f64::NAN;
        }
        let s = WellSeries::new("w", vec![ch("a", v), ch("k", vec![5.0; 10])]).unwrap();
        let diags = validate_series(&s);
        assert_eq!(
            diags,
            vec![
                Diagnostic::MissingValues { channel: "a".into(), count: 5 },
                Diagnostic::ZeroVariance { channel: "k".into(), value: 5.0 },
            ]
        );
    }

    #[test]
    fn channel_spec_invariants() {
        assert!(check_channel_specs(&forge_channels()).is_ok());
        assert!(check_channel_specs(&[ChannelSpec::input("a")]).is_err());
        assert!(check_channel_specs(&[ChannelSpec::target("a"), ChannelSpec::input("a")]).is_err());
        assert!(check_channel_specs(&[ChannelSpec::target("a"), ChannelSpec::target("b")]).is_err());
    }
}
