//! Checkpoints: a binary tensor blob plus a JSON sidecar at `<blob>.json`.
//!
//! Blob layout (little-endian): magic `CSCK`, `u32` format version, `u32`
//! tensor count, then per tensor a `u32`-length UTF-8 name, `u32` rank,
//! `u64` dimensions, and the `f64` values in row-major order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::net::Predictor;
use super::{Hyperparams, ModelParams, Tensors};
use crate::error::{read_to_string, write_file, Error, Result};
use crate::features::FeatureTable;
use crate::graph::{sha256_hex, NodeId, ProgramGraph, TOOL_VERSION};

pub const MAGIC: &[u8; 4] = b"CSCK";
pub const FORMAT_VERSION: u32 = 1;

/// One named tensor as stored in a blob.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Sidecar metadata describing the blob and how the model was trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub tool_version: String,
    pub hyperparams: Hyperparams,
    pub seed: u64,
    pub kind_vocab: Vec<String>,
    /// Final metrics (validation and, when evaluated, test).
    pub metrics: BTreeMap<String, f64>,
    /// SHA-256 of the tensor blob.
    pub tensor_digest: String,
    /// SHA-256 of the canonical graph file the model was trained on.
    pub graph_digest: Option<String>,
    pub input_digests: BTreeMap<String, String>,
    /// Whether training-split edges were passed as messages.
    pub train_edges_in_graph: bool,
    /// Edge splits used in training, as `(callsite, callee)` pairs.
    pub train_edges: Vec<(NodeId, NodeId)>,
    pub val_edges: Vec<(NodeId, NodeId)>,
    pub test_edges: Vec<(NodeId, NodeId)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub meta: CheckpointMeta,
}

/// Sidecar path for a blob path.
pub fn sidecar_path(blob: &Path) -> PathBuf {
    let mut s = blob.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn encode_tensors(t: &Tensors) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + t.parameter_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let count = t.layout().len() as u32;
    out.extend_from_slice(&count.to_le_bytes());
    t.for_each(|name, shape, data| {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    });
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| bad("truncated tensor blob"))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn bad(msg: &str) -> Error {
    Error::Invalid(format!("bad checkpoint: {msg}"))
}

/// Decodes a blob into its named tensors without interpreting them.
pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<RawTensor>> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(4)? != MAGIC {
        return Err(bad("wrong magic"));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(bad(&format!("unsupported format version {version}")));
    }
    let count = r.u32()? as usize;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| bad("tensor name is not UTF-8"))?
            .to_string();
        let rank = r.u32()? as usize;
        if rank > 2 {
            return Err(bad("tensor rank above 2"));
        }
        let mut shape = Vec::with_capacity(rank);
        let mut size: usize = 1;
        for _ in 0..rank {
            let d = usize::try_from(r.u64()?).map_err(|_| bad("dimension overflow"))?;
            size = size
                .checked_mul(d)
                .ok_or_else(|| bad("dimension overflow"))?;
            shape.push(d);
        }
        let raw = r.take(
            size.checked_mul(8)
                .ok_or_else(|| bad("dimension overflow"))?,
        )?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push(RawTensor { name, shape, data });
    }
    if r.at != bytes.len() {
        return Err(bad("trailing bytes after tensors"));
    }
    Ok(out)
}

/// Rebuilds tensors for `hp` and `vocab`, requiring every stored tensor to
/// match the expected name and shape in order.
pub fn tensors_from_raw(raw: &[RawTensor], hp: &Hyperparams, vocab: usize) -> Result<Tensors> {
    hp.validate()?;
    let found: usize = raw.iter().map(|r| r.data.len()).sum();
    if Tensors::count_for(hp, vocab) != Some(found) {
        return Err(bad(&format!(
            "{found} parameters do not fit the recorded hyperparameters"
        )));
    }
    let mut t = Tensors::zeros(hp, vocab);
    let layout = t.layout();
    if layout.len() != raw.len() {
        return Err(bad(&format!(
            "expected {} tensors, found {}",
            layout.len(),
            raw.len()
        )));
    }
    for ((name, shape), r) in layout.iter().zip(raw) {
        if &r.name != name || &r.shape != shape {
            return Err(bad(&format!(
                "tensor {} {:?} does not match expected {} {:?}",
                r.name, r.shape, name, shape
            )));
        }
    }
    let mut i = 0;
    t.for_each_mut(|_, data| {
        data.copy_from_slice(&raw[i].data);
        i += 1;
    });
    if !t.all_finite() {
        return Err(bad("non-finite parameter"));
    }
    Ok(t)
}

impl Checkpoint {
    /// Metadata for freshly trained parameters; splits and digests are
    /// filled in by the caller.
    pub fn new(params: ModelParams) -> Self {
        let meta = CheckpointMeta {
            tool_version: TOOL_VERSION.to_string(),
            hyperparams: params.hp.clone(),
            seed: params.hp.seed,
            kind_vocab: params.kind_vocab.clone(),
            metrics: BTreeMap::new(),
            tensor_digest: sha256_hex(&encode_tensors(&params.tensors)),
            graph_digest: None,
            input_digests: BTreeMap::new(),
            train_edges_in_graph: params.hp.train_edges_in_graph,
            train_edges: Vec::new(),
            val_edges: Vec::new(),
            test_edges: Vec::new(),
        };
        Checkpoint { params, meta }
    }

    /// Writes the blob to `path` and the sidecar to `<path>.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let blob = encode_tensors(&self.params.tensors);
        let mut meta = self.meta.clone();
        meta.tensor_digest = sha256_hex(&blob);
        write_file(path, &blob)?;
        let mut json = serde_json::to_string_pretty(&meta)
            .map_err(|e| Error::json("checkpoint metadata", e))?;
        json.push('\n');
        write_file(&sidecar_path(path), json)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let blob = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let side = sidecar_path(path);
        let meta_text = read_to_string(&side)?;
        Checkpoint::from_parts(&blob, &meta_text)
    }

    /// The model applied to `graph`, passing the recorded training-split
    /// edges as messages when the model was trained that way. Every
    /// consumer of a checkpoint goes through here so their scores agree.
    pub fn predictor(&self, graph: &ProgramGraph, features: &FeatureTable) -> Result<Predictor> {
        let messages: &[(NodeId, NodeId)] = if self.meta.train_edges_in_graph {
            &self.meta.train_edges
        } else {
            &[]
        };
        Predictor::new(self.params.clone(), graph, features, messages)
    }

    /// Validates and assembles a checkpoint from blob bytes and sidecar text.
    pub fn from_parts(blob: &[u8], meta_text: &str) -> Result<Self> {
        let meta: CheckpointMeta =
            serde_json::from_str(meta_text).map_err(|e| Error::json("checkpoint metadata", e))?;
        if sha256_hex(blob) != meta.tensor_digest {
            return Err(bad("tensor digest does not match the sidecar"));
        }
        let raw = decode_tensors(blob)?;
        let tensors = tensors_from_raw(&raw, &meta.hyperparams, meta.kind_vocab.len())?;
        Ok(Checkpoint {
            params: ModelParams {
                hp: meta.hyperparams.clone(),
                kind_vocab: meta.kind_vocab.clone(),
                tensors,
            },
            meta,
        })
    }
}
