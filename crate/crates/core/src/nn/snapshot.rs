//! Parameter snapshot files and parameter digests.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "DMAEPAR\0", u32 version, u32 header length, header JSON,
//! u32 n_blocks, n_blocks x block
//! block  u32 layer, u16 name length, name, u32 rows, u32 cols, rows*cols x f32
//! ```
//!
//! The JSON header stores the input shape, the layer specs with their input
//! widths and a free-form tag (e.g. the design point a model came from).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::graph::ModelGraph;
use super::layer::{Layer, LayerSpec};
use super::Scalar;
use crate::error::{Error, Result};
use crate::rng::rng_from;

pub const MAGIC: &[u8; 8] = b"DMAEPAR\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    input_shape: (usize, usize),
    layers: Vec<(LayerSpec, usize)>,
    tag: String,
}

pub fn write_snapshot<T: Scalar>(path: &Path, graph: &ModelGraph<T>, tag: &str) -> Result<()> {
    let header = Header {
        input_shape: graph.input_shape(),
        layers: graph
            .layers()
            .iter()
            .map(|l| (l.spec.clone(), l.in_width))
            .collect(),
        tag: tag.to_string(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    let params: Vec<_> = graph.params().collect();
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for p in params {
        w.write_all(&(p.layer as u32).to_le_bytes())?;
        w.write_all(&(p.name.len() as u16).to_le_bytes())?;
        w.write_all(p.name.as_bytes())?;
        let (r, c) = p.value.dim();
        w.write_all(&(r as u32).to_le_bytes())?;
        w.write_all(&(c as u32).to_le_bytes())?;
        for v in p.value.iter() {
            w.write_all(&(v.f64() as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a snapshot back into a graph of the requested precision, returning
/// the graph and its tag.
pub fn read_snapshot<T: Scalar>(path: &Path) -> Result<(ModelGraph<T>, String)> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = BufReader::new(File::open(path)?);
    let mut read = |n: usize| -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        r.read_exact(&mut buf).map_err(|e| bad(e.to_string()))?;
        Ok(buf)
    };
    let u32_of = |b: Vec<u8>| u32::from_le_bytes(b.try_into().unwrap());
    if read(8)? != MAGIC {
        return Err(bad("not a parameter snapshot".into()));
    }
    let version = u32_of(read(4)?);
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let len = u32_of(read(4)?) as usize;
    let header: Header = serde_json::from_slice(&read(len)?).map_err(|e| bad(e.to_string()))?;
    let mut init = rng_from(0);
    let mut layers = header
        .layers
        .iter()
        .map(|(spec, in_width)| Layer::<T>::new(spec.clone(), *in_width, &mut init))
        .collect::<Result<Vec<_>>>()?;
    let n_blocks = u32_of(read(4)?) as usize;
    let expected: usize = layers.iter().map(|l| l.params.len()).sum();
    if n_blocks != expected {
        return Err(bad(format!("{n_blocks} parameter blocks, expected {expected}")));
    }
    for _ in 0..n_blocks {
        let layer = u32_of(read(4)?) as usize;
        let name_len = u16::from_le_bytes(read(2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(read(name_len)?).map_err(|e| bad(e.to_string()))?;
        let rows = u32_of(read(4)?) as usize;
        let cols = u32_of(read(4)?) as usize;
        let raw = read(rows * cols * 4)?;
        let param = layers
            .get_mut(layer)
            .and_then(|l| l.param_mut(&name))
            .ok_or_else(|| bad(format!("unknown parameter {layer}/{name}")))?;
        if param.value.dim() != (rows, cols) {
            return Err(bad(format!("shape of {layer}/{name}")));
        }
        for (dst, chunk) in param.value.iter_mut().zip(raw.chunks_exact(4)) {
            *dst = T::of(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
        }
    }
    Ok((ModelGraph::from_layers(header.input_shape, layers, 0)?, header.tag))
}

/// SHA-256 over the specs and parameter values of `layers`, hex encoded.
pub fn layers_digest<T: Scalar>(layers: &[Layer<T>]) -> String {
    let mut h = Sha256::new();
    for (i, l) in layers.iter().enumerate() {
        h.update((i as u64).to_le_bytes());
        h.update(serde_json::to_vec(&l.spec.kind).unwrap_or_default());
        h.update((l.spec.width as u64).to_le_bytes());
        for p in &l.params {
            h.update(p.name.as_bytes());
            let (r, c) = p.value.dim();
            h.update((r as u64).to_le_bytes());
            h.update((c as u64).to_le_bytes());
            for v in p.value.iter() {
                h.update(v.f64().to_le_bytes());
            }
        }
    }
    hex::encode(h.finalize())
}

pub fn graph_digest<T: Scalar>(graph: &ModelGraph<T>) -> String {
    layers_digest(graph.layers())
}
