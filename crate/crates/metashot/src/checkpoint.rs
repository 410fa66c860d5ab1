//! Binary checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic            8 bytes  "MSHOTCKP"
//! version          u32
//! kind             u32 length + UTF-8 (e.g. "meta:aml", "repr:splitbrain")
//! config digest    32 bytes (SHA-256 of the resolved config snapshot)
//! iteration        u64
//! seed             u64
//! weight table     u32 count, then per tensor:
//!                    nameu32+UTF-8, requires_grad u8, rank u32,
//!                    dims u64 x rank, values f64 x n
//! step-size table  same encoding
//! ```
//!
//! Every stochastic choice in the engine is a pure function of the seed
//! and the iteration counter, so (seed, iteration) *is* the complete
//! random-number state: nothing else is needed for exact resumption.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use diffcore::{ParamSet, Tensor};
use metalearn::TrainState;

use crate::error::{CliError, Result};

const MAGIC: &[u8; 8] = b"MSHOTCKP";
const VERSION: u32 = 1;

/// Everything a training stage persists between processes.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// What the tensors are: `meta:<method>` or `repr:<objective>`.
    pub kind: String,
    /// SHA-256 of the resolved configuration that produced this file.
    pub digest: [u8; 32],
    pub iteration: u64,
    pub seed: u64,
    pub params: ParamSet,
    /// Per-weight step sizes; empty for representation checkpoints.
    pub alpha: ParamSet,
}

impl Checkpoint {
    /// Packages a training state for persistence.
    pub fn from_state(kind: String, digest: [u8; 32], state: &TrainState) -> Checkpoint {
        Checkpoint {
            kind,
            digest,
            iteration: state.iteration,
            seed: state.seed,
            params: state.params.clone(),
            alpha: state.alpha.clone(),
        }
    }

    pub fn into_state(self) -> TrainState {
        TrainState {
            params: self.params,
            alpha: self.alpha,
            iteration: self.iteration,
            seed: self.seed,
        }
    }
}

fn corrupt(path: &Path, reason: impl Into<String>) -> CliError {
    CliError::Checkpoint { path: path.to_path_buf(), reason: reason.into() }
}

fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(bytes);
}

fn put_table(out: &mut Vec<u8>, set: &ParamSet) {
    out.extend_from_slice(&(set.len() as u32).to_le_bytes());
    for (name, tensor) in set.iter() {
        put_bytes(out, name.as_bytes());
        out.push(u8::from(tensor.requires_grad()));
        out.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
        for &dim in tensor.shape() {
            out.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        for &value in tensor.data() {
            out.extend_from_slice(&value.to_le_bytes());
        }
    }
}

/// Serializes a checkpoint to its byte representation.
pub fn encode(ck: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_bytes(&mut out, ck.kind.as_bytes());
    out.extend_from_slice(&ck.digest);
    out.extend_from_slice(&ck.iteration.to_le_bytes());
    out.extend_from_slice(&ck.seed.to_le_bytes());
    put_table(&mut out, &ck.params);
    put_table(&mut out, &ck.alpha);
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn chunk(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.bytes.len() {
            return Err(corrupt(self.path, "file ends mid-record (truncated?)"));
        }
        let piece = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(piece)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.chunk(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.chunk(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.chunk(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.chunk(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let bytes = self.chunk(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| corrupt(self.path, "name field is not valid UTF-8"))
    }

    fn table(&mut self) -> Result<ParamSet> {
        let count = self.u32()?;
        let mut set = ParamSet::new();
        for _ in 0..count {
            let name = self.string()?;
            let requires_grad = self.u8()? != 0;
            let rank = self.u32()? as usize;
            let mut shape = Vec::with_capacity(rank);
            let mut elements = 1usize;
            for _ in 0..rank {
                let dim = self.u64()? as usize;
                elements = elements.saturating_mul(dim);
                shape.push(dim);
            }
            if elements > self.bytes.len() {
                return Err(corrupt(self.path, format!("tensor `{name}` claims {elements} values")));
            }
            let mut data = Vec::with_capacity(elements);
            for _ in 0..elements {
                data.push(self.f64()?);
            }
            let tensor = Tensor::new(&shape, data)
                .map_err(|e| corrupt(self.path, format!("tensor `{name}`: {e}")))?
                .with_requires_grad(requires_grad);
            set.insert(name.clone(), tensor)
                .map_err(|_| corrupt(self.path, format!("duplicate tensor `{name}`")))?;
        }
        Ok(set)
    }
}

/// Parses checkpoint bytes, verifying framing and completeness.
pub fn decode(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let mut c = Cursor { bytes, at: 0, path };
    if c.chunk(MAGIC.len())? != MAGIC {
        return Err(corrupt(path, "not a checkpoint file (bad magic)"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(corrupt(
            path,
            format!("format version {version} is not supported (this build reads {VERSION})"),
        ));
    }
    let kind = c.string()?;
    let digest: [u8; 32] =
        c.chunk(32)?.try_into().map_err(|_| corrupt(path, "digest field cut short"))?;
    let iteration = c.u64()?;
    let seed = c.u64()?;
    let params = c.table()?;
    let alpha = c.table()?;
    if c.at != bytes.len() {
        return Err(corrupt(path, format!("{} trailing bytes after payload", bytes.len() - c.at)));
    }
    Ok(Checkpoint { kind, digest, iteration, seed, params, alpha })
}

/// Writes atomically: a sibling temp file is renamed over the target, so a
/// crash never leaves a half-written checkpoint under the final name.
pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let bytes = encode(ck);
    let tmp = sibling_tmp(path);
    {
        let mut file = fs::File::create(&tmp).map_err(CliError::io(&tmp))?;
        file.write_all(&bytes).map_err(CliError::io(&tmp))?;
        file.sync_all().map_err(CliError::io(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(CliError::io(path))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(CliError::io(path))?;
    decode(&bytes, path)
}

fn sibling_tmp(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}
