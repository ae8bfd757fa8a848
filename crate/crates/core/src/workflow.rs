//! Manifest-driven steps behind the command-line verbs.
//!
//! Intermediates live under `<out>/cache/` and are keyed by a sha256 over
//! the manifest fields they depend on (plus the bytes of every well file):
//! segments depend on wells, channels and segmentation parameters; windows
//! additionally on window parameters and the seed. Changing the seed
//! therefore re-splits windows but reuses segments.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::dse::report::{emit_reports, read_ledger, write_ledger};
use crate::dse::{run_all, run_seed, ModelTag, PipelineRunner, RunRecord};
use crate::error::{Error, Result};
use crate::ingest::{load_well, validation_report, Channel, ChannelRole, ChannelSpec, LoadOptions, WellSeries};
use crate::mae::MaeConfig;
use crate::manifest::Manifest;
use crate::nn::snapshot::{read_snapshot, write_snapshot};
use crate::nn::{CellKind, TrainReport};
use crate::segmentation::{segment_well_detailed, DrillingSegment};
use crate::transfer::TestSet;
use crate::windows::{prepare, PreparedData, WindowLayout};

const SEG_MAGIC: &[u8; 8] = b"DMAESEG\0";

fn hash_file(path: &Path) -> Result<String> {
    let mut f = BufReader::new(File::open(path)?);
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

/// Cache key for segmentation output.
pub fn segments_key(m: &Manifest) -> Result<String> {
    let mut h = Sha256::new();
    for (id, path) in &m.wells {
        h.update(format!("well {id} {}\n", hash_file(path)?));
    }
    h.update(format!("channels {}\n", json(&m.channels)));
    h.update(format!("delimiter {}\n", m.delimiter));
    h.update(format!("seg {}\n", json(&m.segmentation)));
    Ok(hex::encode(h.finalize()))
}

/// Cache key for the window split.
pub fn windows_key(m: &Manifest) -> Result<String> {
    let mut h = Sha256::new();
    h.update(segments_key(m)?);
    h.update(format!("windows {}\nseed {}\n", json(&m.windows), m.seed));
    Ok(hex::encode(h.finalize()))
}

fn short(key: &str) -> &str {
    &key[..16]
}

pub fn cache_dir(m: &Manifest) -> PathBuf {
    m.out.join("cache")
}

pub fn models_dir(m: &Manifest) -> PathBuf {
    m.out.join("models")
}

pub fn reports_dir(m: &Manifest) -> PathBuf {
    m.out.join("reports")
}

pub fn ledger_path(m: &Manifest) -> PathBuf {
    m.out.join("ledger.csv")
}

/// Records produced by the single-model verbs.
pub fn runs_path(m: &Manifest) -> PathBuf {
    m.out.join("runs.csv")
}

fn load_opts(m: &Manifest) -> LoadOptions {
    LoadOptions {
        delimiter: m.delimiter,
        ..LoadOptions::default()
    }
}

pub fn load_wells(m: &Manifest) -> Result<BTreeMap<String, WellSeries>> {
    m.wells
        .iter()
        .map(|(id, path)| Ok((id.clone(), load_well(id, path, &m.channels, &load_opts(m))?)))
        .collect()
}

/// One validation report per well.
pub fn ingest_reports(m: &Manifest) -> Result<Vec<String>> {
    Ok(load_wells(m)?.values().map(validation_report).collect())
}

/// Loads one file outside any manifest: `inputs` as model inputs and
/// `target` as the regression target.
pub fn ingest_file(well_id: &str, path: &Path, inputs: &[String], target: &str) -> Result<WellSeries> {
    let mut specs: Vec<ChannelSpec> = inputs.iter().map(ChannelSpec::input).collect();
    specs.push(ChannelSpec::target(target));
    crate::ingest::check_channel_specs(&specs)?;
    load_well(well_id, path, &specs, &LoadOptions::default())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WellSegmentation {
    pub well_id: String,
    pub samples: usize,
    pub segments: Vec<(usize, usize)>,
    pub dropped: usize,
}

impl WellSegmentation {
    pub fn covered(&self) -> usize {
        self.segments.iter().map(|s| s.1).sum()
    }
}

pub struct Segmented {
    pub per_well: BTreeMap<String, Vec<DrillingSegment>>,
    pub summary: Vec<WellSegmentation>,
    pub cache_hit: bool,
    pub path: PathBuf,
}

/// Segments every well, reusing the cache when the key matches.
pub fn segment(m: &Manifest) -> Result<Segmented> {
    let key = segments_key(m)?;
    let path = cache_dir(m).join(format!("segments-{}.bin", short(&key)));
    if path.is_file() {
        if let Ok((stored, per_well, summary)) = read_segments(&path) {
            if stored == key {
                return Ok(Segmented {
                    per_well,
                    summary,
                    cache_hit: true,
                    path,
                });
            }
        }
    }
    let wells = load_wells(m)?;
    let mut per_well = BTreeMap::new();
    let mut summary = Vec::new();
    for (id, series) in &wells {
        let seg = segment_well_detailed(series, &m.segmentation)?;
        summary.push(WellSegmentation {
            well_id: id.clone(),
            samples: series.len(),
            segments: seg.segments.iter().map(|s| (s.start_index, s.len())).collect(),
            dropped: seg.dropped.len(),
        });
        per_well.insert(id.clone(), seg.segments);
    }
    std::fs::create_dir_all(cache_dir(m))?;
    write_segments(&path, &key, &per_well, &summary)?;
    Ok(Segmented {
        per_well,
        summary,
        cache_hit: false,
        path,
    })
}

fn put_str(w: &mut impl Write, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_segments(
    path: &Path,
    key: &str,
    per_well: &BTreeMap<String, Vec<DrillingSegment>>,
    summary: &[WellSegmentation],
) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut w = BufWriter::new(File::create(&tmp)?);
    w.write_all(SEG_MAGIC)?;
    put_str(&mut w, key)?;
    put_u64(&mut w, summary.len() as u64)?;
    for s in summary {
        put_str(&mut w, &s.well_id)?;
        put_u64(&mut w, s.samples as u64)?;
        put_u64(&mut w, s.dropped as u64)?;
        let segs = &per_well[&s.well_id];
        put_u64(&mut w, segs.len() as u64)?;
        for seg in segs {
            put_u64(&mut w, seg.start_index as u64)?;
            put_u64(&mut w, seg.len() as u64)?;
            for &i in &seg.indices {
                put_u64(&mut w, i as u64)?;
            }
            put_u64(&mut w, seg.channels.len() as u64)?;
            for c in &seg.channels {
                put_str(&mut w, &c.spec.name)?;
                put_str(&mut w, c.spec.role.as_str())?;
                for &v in &c.values {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
    }
    w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    std::fs::rename(tmp, path)?;
    Ok(())
}

struct Cursor<R> {
    r: R,
    path: PathBuf,
}

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.r.read_exact(&mut b).map_err(|_| self.bad("truncated"))?;
        Ok(b)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn string(&mut self) -> Result<String> {
        let n = u32::from_le_bytes(self.bytes()?) as usize;
        let mut b = vec![0u8; n];
        self.r.read_exact(&mut b).map_err(|_| self.bad("truncated"))?;
        String::from_utf8(b).map_err(|_| self.bad("invalid utf-8"))
    }

    fn bad(&self, reason: &str) -> Error {
        Error::Format {
            path: self.path.clone(),
            reason: reason.into(),
        }
    }
}

type SegmentCache = (String, BTreeMap<String, Vec<DrillingSegment>>, Vec<WellSegmentation>);

fn read_segments(path: &Path) -> Result<SegmentCache> {
    let mut c = Cursor {
        r: BufReader::new(File::open(path)?),
        path: path.to_path_buf(),
    };
    if &c.bytes::<8>()? != SEG_MAGIC {
        return Err(c.bad("not a segment cache"));
    }
    let key = c.string()?;
    let wells = c.u64()? as usize;
    let mut per_well = BTreeMap::new();
    let mut summary = Vec::with_capacity(wells);
    for _ in 0..wells {
        let well_id = c.string()?;
        let samples = c.u64()? as usize;
        let dropped = c.u64()? as usize;
        let n_segs = c.u64()? as usize;
        let mut segs = Vec::with_capacity(n_segs);
        for _ in 0..n_segs {
            let start_index = c.u64()? as usize;
            let len = c.u64()? as usize;
            let indices = (0..len).map(|_| c.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
            let n_ch = c.u64()? as usize;
            let mut channels = Vec::with_capacity(n_ch);
            for _ in 0..n_ch {
                let name = c.string()?;
                let role: ChannelRole = c.string()?.parse()?;
                let values = (0..len).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
                channels.push(Channel {
                    spec: ChannelSpec::new(name, role),
                    values,
                });
            }
            segs.push(DrillingSegment {
                well_id: well_id.clone(),
                start_index,
                indices,
                channels,
            });
        }
        summary.push(WellSegmentation {
            well_id: well_id.clone(),
            samples,
            segments: segs.iter().map(|s| (s.start_index, s.len())).collect(),
            dropped,
        });
        per_well.insert(well_id, segs);
    }
    Ok((key, per_well, summary))
}

pub struct Windowed {
    pub data: PreparedData,
    pub segments_cached: bool,
    pub split_file: PathBuf,
}

/// Runs (or reuses) segmentation, then the window pipeline. The split is
/// listed in `<cache>/windows-<key>.csv` as `split, well, segment, offset, label`.
pub fn windows(m: &Manifest) -> Result<Windowed> {
    let seg = segment(m)?;
    let layout = WindowLayout::from_specs(&m.channels)?;
    let data = prepare(&seg.per_well, &layout, &m.windows, m.seed)?;
    let key = windows_key(m)?;
    let split_file = cache_dir(m).join(format!("windows-{}.csv", short(&key)));
    if !split_file.is_file() {
        let tmp = split_file.with_extension("tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            writeln!(w, "split,well,segment,offset,label")?;
            for set in [&data.train, &data.validation, &data.test] {
                for win in &set.windows {
                    let id = win.id();
                    let label = if set.split == crate::windows::SplitTag::Test {
                        String::new()
                    } else {
                        win.label.to_string()
                    };
                    writeln!(w, "{},{},{},{},{}", set.split, id.well_id, id.segment_id, id.offset, label)?;
                }
            }
            w.flush()?;
        }
        std::fs::rename(tmp, &split_file)?;
    }
    Ok(Windowed {
        data,
        segments_cached: seg.cache_hit,
        split_file,
    })
}

fn runner<'a>(m: &Manifest, data: &'a PreparedData, test: &'a TestSet, snapshots: bool) -> Result<PipelineRunner<'a>> {
    let snapshot_dir = if snapshots {
        std::fs::create_dir_all(models_dir(m))?;
        Some(models_dir(m))
    } else {
        None
    };
    Ok(PipelineRunner {
        data,
        test,
        settings: m.search.clone(),
        snapshot_dir,
    })
}

/// Inserts or replaces records (matched by name) in `runs.csv`.
pub fn upsert_runs(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut all = if path.is_file() { read_ledger(path)? } else { Vec::new() };
    for r in records {
        match all.iter_mut().find(|x| x.tag == r.tag) {
            Some(slot) => *slot = r.clone(),
            None => all.push(r.clone()),
        }
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    write_ledger(path, &all)
}

/// Trains and evaluates the requested baselines.
pub fn baselines(m: &Manifest, cells: &[CellKind]) -> Result<Vec<RunRecord>> {
    let w = windows(m)?;
    let test = TestSet::new(w.data.test.clone());
    let run = runner(m, &w.data, &test, true)?;
    let records = cells
        .iter()
        .map(|&c| run.baseline(c, run_seed(m.seed, &ModelTag::Baseline(c))))
        .collect::<Result<Vec<_>>>()?;
    upsert_runs(&runs_path(m), &records)?;
    Ok(records)
}

pub fn autoencoder_path(m: &Manifest, cfg: &MaeConfig) -> PathBuf {
    models_dir(m).join(format!("{cfg}.ae.par"))
}

/// Stage 1 only; the autoencoder snapshot and the epoch log go to `models/`.
pub fn pretrain_config(m: &Manifest, cfg: &MaeConfig) -> Result<(PathBuf, TrainReport)> {
    cfg.validate()?;
    let w = windows(m)?;
    let test = TestSet::new(w.data.test.clone());
    let run = runner(m, &w.data, &test, false)?;
    let (ae, report) = run.stage1(cfg, run_seed(m.seed, &ModelTag::Mae(*cfg)))?;
    std::fs::create_dir_all(models_dir(m))?;
    let path = autoencoder_path(m, cfg);
    write_snapshot(&path, &ae, &format!("{cfg} stage1 epochs={}", report.epochs_run()))?;
    report.write_csv(&models_dir(m).join(format!("{cfg}.stage1.csv")))?;
    Ok((path, report))
}

/// Stage 2 from the snapshot written by [`pretrain_config`].
pub fn finetune_config(m: &Manifest, cfg: &MaeConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let path = autoencoder_path(m, cfg);
    if !path.is_file() {
        return Err(Error::MissingFile(path));
    }
    let (ae, tag) = read_snapshot::<f32>(&path)?;
    let stage1_epochs = tag
        .rsplit_once("epochs=")
        .and_then(|(_, n)| n.parse().ok())
        .unwrap_or(0);
    let w = windows(m)?;
    if ae.input_shape() != (w.data.train.window_len(), w.data.train.features()) {
        return Err(Error::shape(
            format!("{:?}", (w.data.train.window_len(), w.data.train.features())),
            format!("{:?} in {}", ae.input_shape(), path.display()),
        ));
    }
    let test = TestSet::new(w.data.test.clone());
    let run = runner(m, &w.data, &test, true)?;
    let rec = run.stage2(cfg, run_seed(m.seed, &ModelTag::Mae(*cfg)), &ae, stage1_epochs)?;
    upsert_runs(&runs_path(m), std::slice::from_ref(&rec))?;
    Ok(rec)
}

pub struct SearchOutcome {
    pub records: Vec<RunRecord>,
    pub ledger: PathBuf,
    pub reports: Vec<PathBuf>,
    pub test_reads: usize,
}

/// The full search over `m.grid` plus both baselines.
pub fn search(m: &Manifest, snapshots: bool) -> Result<SearchOutcome> {
    let w = windows(m)?;
    let test = TestSet::new(w.data.test.clone());
    let run = runner(m, &w.data, &test, snapshots)?;
    let records = run_all(&m.grid, &run, m.seed, m.workers)?;
    std::fs::create_dir_all(&m.out)?;
    let ledger = ledger_path(m);
    write_ledger(&ledger, &records)?;
    let reports = emit_reports(&records, &reports_dir(m))?;
    Ok(SearchOutcome {
        test_reads: test.reads(),
        records,
        ledger,
        reports,
    })
}

/// Rebuilds every report file from a ledger alone.
pub fn report(ledger: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let records = read_ledger(ledger)?;
    emit_reports(&records, out_dir)
}
