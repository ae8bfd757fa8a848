//! Experiment manifest: a `key = value` text file.
//!
//! ```text
//! # comments start with '#'
//! well.58-32 = data/58-32.csv       # one line per well, relative to the manifest
//! well.16A-78 = data/16A-78.csv
//! channels = WOB:input, ROP:input, Total Mud Volume:target, ...
//! delimiter = ,
//! seg.long_window = 10000           # any SegmentationParams field
//! window.len = 600                  # len, stride, subsample, test, validation
//! train.learning_rate = 0.001       # learning_rate, batch_size, patience, clip_norm,
//!                                   # pretrain_epochs, finetune_epochs, baseline_epochs,
//!                                   # header_width
//! grid = full                       # or a comma list of config names
//! seed = 42
//! workers = 4
//! out = runs/exp1
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::dse::SearchSettings;
use crate::error::{Error, Result};
use crate::ingest::{check_channel_specs, forge_channels, ChannelSpec};
use crate::mae::{enumerate_grid, MaeConfig};
use crate::segmentation::SegmentationParams;
use crate::windows::WindowParams;

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub wells: BTreeMap<String, PathBuf>,
    pub channels: Vec<ChannelSpec>,
    pub delimiter: u8,
    pub segmentation: SegmentationParams,
    pub windows: WindowParams,
    pub search: SearchSettings,
    pub grid: Vec<MaeConfig>,
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            wells: BTreeMap::new(),
            channels: forge_channels(),
            delimiter: b',',
            segmentation: SegmentationParams::default(),
            windows: WindowParams::default(),
            search: SearchSettings::default(),
            grid: enumerate_grid(),
            seed: 0,
            workers: 1,
            out: PathBuf::from("out"),
        }
    }
}

fn field_err(field: &str, reason: impl Into<String>) -> Error {
    Error::Manifest {
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| field_err(key, format!("cannot parse `{value}`")))
}

pub fn parse_channels(value: &str) -> Result<Vec<ChannelSpec>> {
    let specs = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (name, role) = item
                .rsplit_once(':')
                .ok_or_else(|| field_err("channels", format!("`{item}` is not name:role")))?;
            Ok(ChannelSpec::new(name.trim(), role.parse()?))
        })
        .collect::<Result<Vec<_>>>()?;
    check_channel_specs(&specs)?;
    Ok(specs)
}

pub fn parse_grid(value: &str) -> Result<Vec<MaeConfig>> {
    if value.trim() == "full" {
        return Ok(enumerate_grid());
    }
    let grid = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let c: MaeConfig = s.parse().map_err(|_| field_err("grid", format!("bad config `{s}`")))?;
            c.validate().map_err(|e| field_err("grid", e.to_string()))?;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    if grid.is_empty() {
        return Err(field_err("grid", "empty"));
    }
    Ok(grid)
}

impl Manifest {
    /// Reads a manifest; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with(path, &[])
    }

    /// Like [`Manifest::load`], applying `overrides` (key, value) after the file.
    pub fn load_with(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let mut pairs = parse_pairs(&text)?;
        pairs.extend(overrides.iter().cloned());
        let m = Self::from_pairs(&pairs, &base)?;
        m.check_paths()?;
        Ok(m)
    }

    /// Builds a manifest from ordered `(key, value)` pairs; later keys win.
    pub fn from_pairs(pairs: &[(String, String)], base: &Path) -> Result<Self> {
        let mut m = Manifest::default();
        for (key, value) in pairs {
            m.set(key, value, base)?;
        }
        m.validate()?;
        Ok(m)
    }

    fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let value = value.trim();
        let resolve = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        if let Some(id) = key.strip_prefix("well.") {
            if id.is_empty() {
                return Err(field_err(key, "empty well id"));
            }
            self.wells.insert(id.to_string(), resolve(value));
            return Ok(());
        }
        let s = &mut self.segmentation;
        let w = &mut self.windows;
        let t = &mut self.search;
        match key {
            "channels" => self.channels = parse_channels(value)?,
            "delimiter" => {
                let d = match value {
                    "tab" | "\\t" => b'\t',
                    "" => b',',
                    v if v.len() == 1 => v.as_bytes()[0],
                    _ => return Err(field_err(key, "must be a single character or `tab`")),
                };
                self.delimiter = d;
            }
            "seg.long_window" => s.long_window = parse(key, value)?,
            "seg.short_window" => s.short_window = parse(key, value)?,
            "seg.short_threshold" => s.short_threshold = parse(key, value)?,
            "seg.block_window" => s.block_window = parse(key, value)?,
            "seg.block_threshold" => s.block_threshold = parse(key, value)?,
            "seg.min_depth" => s.min_depth = parse(key, value)?,
            "seg.gap_limit" => s.gap_limit = parse(key, value)?,
            "seg.impute_window" => s.impute_window = parse(key, value)?,
            "seg.depth_tolerance" => s.depth_tolerance = parse(key, value)?,
            "window.len" => w.window_len = parse(key, value)?,
            "window.stride" => w.stride = parse(key, value)?,
            "window.subsample" => w.subsample = parse(key, value)?,
            "window.test" => w.test = parse(key, value)?,
            "window.validation" => w.validation = parse(key, value)?,
            "train.learning_rate" => {
                let v = parse(key, value)?;
                t.pretrain.learning_rate = v;
                t.finetune.learning_rate = v;
                t.baseline.learning_rate = v;
            }
            "train.batch_size" => {
                let v = parse(key, value)?;
                t.pretrain.batch_size = v;
                t.finetune.batch_size = v;
                t.baseline.batch_size = v;
            }
            "train.patience" => {
                let v = parse(key, value)?;
                t.pretrain.patience = v;
                t.finetune.patience = v;
                t.baseline.patience = v;
            }
            "train.clip_norm" => {
                let v = parse(key, value)?;
                t.pretrain.clip_norm = v;
                t.finetune.clip_norm = v;
                t.baseline.clip_norm = v;
            }
            "train.pretrain_epochs" => t.pretrain.max_epochs = parse(key, value)?,
            "train.finetune_epochs" => t.finetune.max_epochs = parse(key, value)?,
            "train.baseline_epochs" => t.baseline.max_epochs = parse(key, value)?,
            "train.header_width" => t.header_width = parse(key, value)?,
            "grid" => self.grid = parse_grid(value)?,
            "seed" => self.seed = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "out" => self.out = resolve(value),
            _ => return Err(field_err(key, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.segmentation
            .validate()
            .map_err(|e| field_err("seg", e.to_string()))?;
        let w = &self.windows;
        if w.window_len == 0 || w.stride == 0 {
            return Err(field_err("window", "len and stride must be positive"));
        }
        for (name, v) in [("window.subsample", w.subsample), ("window.test", w.test), ("window.validation", w.validation)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(field_err(name, format!("{v} not in (0, 1]")));
            }
        }
        for (name, cfg) in [
            ("train (pretrain)", &self.search.pretrain),
            ("train (finetune)", &self.search.finetune),
            ("train (baseline)", &self.search.baseline),
        ] {
            cfg.validate().map_err(|e| field_err(name, e.to_string()))?;
        }
        if self.search.header_width == 0 {
            return Err(field_err("train.header_width", "must be positive"));
        }
        if self.workers == 0 {
            return Err(field_err("workers", "must be at least 1"));
        }
        Ok(())
    }

    /// Every well file must exist.
    pub fn check_paths(&self) -> Result<()> {
        if self.wells.is_empty() {
            return Err(field_err("well.<id>", "no wells listed"));
        }
        for (id, path) in &self.wells {
            if !path.is_file() {
                return Err(field_err(&format!("well.{id}"), format!("file not found: {}", path.display())));
            }
        }
        Ok(())
    }
}

/// Splits manifest text into ordered `(key, value)` pairs.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = match raw.find(" #") {
            Some(k) => &raw[..k],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| field_err(&format!("line {}", i + 1), "expected `key = value`"))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Parses `key=value` command-line overrides.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| field_err(s, "override must be key=value"))
}
