//! Binary window cache.
//!
//! Little-endian layout:
//!
//! ```text
//! header  magic "DMAEWIN\0", u32 version, u32 window_len, u32 features,
//!         u32 n_stats, n_stats x (str name, f64 min, f64 max),
//!         u32 n_inputs, n_inputs x str, str target, u8 split, u64 n_records
//! record  str well_id, u32 segment_id, u32 offset,
//!         window_len * features x f32 (row-major), f32 label
//! str     u16 byte length + UTF-8 bytes
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;

use super::{LabeledWindow, NormalizationStats, SplitTag, WindowLayout, WindowSet};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DMAEWIN\0";
pub const VERSION: u32 = 1;

fn put_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| std::io::Error::other("string too long"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(s.as_bytes())
}

pub fn write_window_set(path: &Path, set: &WindowSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let window_len = set.window_len();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(window_len as u32).to_le_bytes())?;
    w.write_all(&(set.features() as u32).to_le_bytes())?;
    w.write_all(&(set.stats.channels.len() as u32).to_le_bytes())?;
    for (k, name) in set.stats.channels.iter().enumerate() {
        put_str(&mut w, name)?;
        w.write_all(&set.stats.min[k].to_le_bytes())?;
        w.write_all(&set.stats.max[k].to_le_bytes())?;
    }
    w.write_all(&(set.layout.inputs.len() as u32).to_le_bytes())?;
    for name in &set.layout.inputs {
        put_str(&mut w, name)?;
    }
    put_str(&mut w, &set.layout.target)?;
    w.write_all(&[set.split.code()])?;
    w.write_all(&(set.len() as u64).to_le_bytes())?;
    for win in &set.windows {
        put_str(&mut w, win.well_id())?;
        w.write_all(&(win.segment_id() as u32).to_le_bytes())?;
        w.write_all(&(win.offset as u32).to_le_bytes())?;
        for v in win.inputs().iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&win.label.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

struct Reader<'a, R> {
    inner: R,
    path: &'a Path,
}

impl<R: Read> Reader<'_, R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| self.bad(e.to_string()))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn string(&mut self) -> Result<String> {
        let len = u16::from_le_bytes(self.bytes()?) as usize;
        let mut buf = vec![0u8; len];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| self.bad(e.to_string()))?;
        String::from_utf8(buf).map_err(|e| self.bad(e.to_string()))
    }

    fn bad(&self, reason: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }
}

pub fn read_window_set(path: &Path) -> Result<WindowSet> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = Reader {
        inner: BufReader::new(File::open(path)?),
        path,
    };
    if &r.bytes::<8>()? != MAGIC {
        return Err(r.bad("not a window cache"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.bad(format!("unsupported version {version}")));
    }
    let window_len = r.u32()? as usize;
    let features = r.u32()? as usize;
    let n_stats = r.u32()? as usize;
    let mut stats = NormalizationStats {
        channels: Vec::with_capacity(n_stats),
        min: Vec::with_capacity(n_stats),
        max: Vec::with_capacity(n_stats),
    };
    for _ in 0..n_stats {
        stats.channels.push(r.string()?);
        stats.min.push(r.f64()?);
        stats.max.push(r.f64()?);
    }
    let n_inputs = r.u32()? as usize;
    if n_inputs != features {
        return Err(r.bad(format!("{n_inputs} input names for {features} features")));
    }
    let inputs = (0..n_inputs)
        .map(|_| r.string())
        .collect::<Result<Vec<_>>>()?;
    let target = r.string()?;
    let split = SplitTag::from_code(r.bytes::<1>()?[0]).ok_or_else(|| r.bad("bad split tag"))?;
    let n = r.u64()? as usize;
    let mut windows = Vec::with_capacity(n);
    let mut wells: Vec<Arc<str>> = Vec::new();
    for _ in 0..n {
        let name = r.string()?;
        let well = match wells.iter().find(|w| ***w == *name) {
            Some(w) => w.clone(),
            None => {
                let w: Arc<str> = Arc::from(name.as_str());
                wells.push(w.clone());
                w
            }
        };
        let segment_id = r.u32()? as usize;
        let offset = r.u32()? as usize;
        let mut values = Vec::with_capacity(window_len * features);
        for _ in 0..window_len * features {
            values.push(r.f32()?);
        }
        let label = r.f32()?;
        let inputs = Array2::from_shape_vec((window_len, features), values)
            .map_err(|e| r.bad(e.to_string()))?;
        windows.push(LabeledWindow::standalone(
            well, segment_id, offset, inputs, label,
        ));
    }
    Ok(WindowSet {
        windows,
        stats: Arc::new(stats),
        layout: Arc::new(WindowLayout { inputs, target }),
        split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let stats = NormalizationStats {
            channels: vec!["a".into(), "b".into(), "y".into()],
            min: vec![0.0, -1.5, 2.0],
            max: vec![1.0, 3.25, 9.0],
        };
        let windows = (0..3)
            .map(|i| {
                let m =
                    Array2::from_shape_fn((4, 2), |(t, f)| (i * 10 + t * 2 + f) as f32 * 0.125);
                let well = if i < 2 { "w1" } else { "w2" };
                LabeledWindow::standalone(Arc::from(well), i, i * 7, m, 0.25 * i as f32)
            })
            .collect();
        let set = WindowSet {
            windows,
            stats: Arc::new(stats),
            layout: Arc::new(WindowLayout {
                inputs: vec!["a".into(), "b".into()],
                target: "y".into(),
            }),
            split: SplitTag::Test,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("test.win");
        write_window_set(&path, &set).unwrap();
        let back = read_window_set(&path).unwrap();
        assert_eq!(back.split, SplitTag::Test);
        assert_eq!(*back.stats, *set.stats);
        assert_eq!(*back.layout, *set.layout);
        assert_eq!(back.ids(), set.ids());
        assert_eq!(back.labels(), set.labels());
        for (a, b) in back.windows.iter().zip(&set.windows) {
            assert_eq!(a.inputs(), b.inputs());
        }
        // magic+4 u32, stats 3 x (2+1+16), input names 4+2x3, target 3, split 1, count 8
        let header = 24 + 57 + 10 + 3 + 1 + 8;
        let record = 2 + 2 + 8 + 4 * 8 + 4;
        assert_eq!(
            std::fs::metadata(&path).unwrap().len() as usize,
            header + 3 * record
        );

        std::fs::write(&path, b"garbage!").unwrap();
        assert!(matches!(read_window_set(&path), Err(Error::Format { .. })));
    }
}
