//! Versioned binary checkpoints.
//!
//! Layout: the magic line `FLOWCKPT 1`, one JSON header line (dtype,
//! architecture, optimizer config, epoch counter, RNG state), then named
//! binary blocks — every parameter tensor followed by the Adam first and
//! second moments (`adam.m.*`, `adam.v.*`), each as little-endian scalars.
//! Saving is canonical, so save → load → save reproduces the bytes exactly.

use super::{Adam, TrainConfig, Trainer};
use crate::error::{Error, Result};
use crate::model::{FlowModel, ModelConfig};
use crate::scalar::{Dtype, Scalar};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

const MAGIC: &str = "FLOWCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dtype: String,
    model: ModelConfig,
    point_permutations: Vec<Vec<usize>>,
    prior_permutations: Vec<Vec<usize>>,
    train: TrainConfig,
    next_epoch: usize,
    adam_t: u64,
    rng: ChaCha8Rng,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn push_block<S: Scalar>(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[S]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(shape.len() as u8);
    for &d in shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    let byte_len = data.len() * S::DTYPE.size_bytes();
    out.extend_from_slice(&(byte_len as u64).to_le_bytes());
    for &v in data {
        v.write_le(out);
    }
}

/// Serializes the trainer (model, optimizer, RNG, epoch) to `path`.
pub fn save<S: Scalar>(trainer: &Trainer<S>, path: &Path) -> Result<()> {
    let header = Header {
        dtype: S::DTYPE.tag().to_string(),
        model: trainer.model.config.clone(),
        point_permutations: trainer.model.point_flow.permutations(),
        prior_permutations: trainer.model.prior_flow.permutations(),
        train: trainer.config.clone(),
        next_epoch: trainer.next_epoch,
        adam_t: trainer.adam.t,
        rng: trainer.rng.clone(),
    };
    let header_json = serde_json::to_string(&header)
        .map_err(|e| corrupt(format!("header serialization failed: {e}")))?;
    let mut out = Vec::new();
    out.extend_from_slice(format!("{MAGIC} {VERSION}\n").as_bytes());
    out.extend_from_slice(header_json.as_bytes());
    out.push(b'\n');
    for p in trainer.model.params.iter() {
        push_block(&mut out, &p.name, &p.shape, &p.data);
    }
    for (i, p) in trainer.model.params.iter().enumerate() {
        push_block(&mut out, &format!("adam.m.{}", p.name), &p.shape, &trainer.adam.m[i]);
    }
    for (i, p) in trainer.model.params.iter().enumerate() {
        push_block(&mut out, &format!("adam.v.{}", p.name), &p.shape, &trainer.adam.v[i]);
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &out).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(corrupt(format!(
                "truncated: wanted {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn read_block<S: Scalar>(c: &mut Cursor) -> Result<(String, Vec<usize>, Vec<S>)> {
    let name_len = c.u32()? as usize;
    if name_len > 4096 {
        return Err(corrupt(format!("implausible block name length {name_len}")));
    }
    let name = std::str::from_utf8(c.take(name_len)?)
        .map_err(|_| corrupt("block name is not UTF-8"))?
        .to_string();
    let rank = c.take(1)?[0] as usize;
    if rank > 8 {
        return Err(corrupt(format!("block {name}: implausible rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(c.u64()? as usize);
    }
    let count: usize = shape.iter().product();
    let byte_len = c.u64()? as usize;
    if byte_len != count * S::DTYPE.size_bytes() {
        return Err(corrupt(format!(
            "block {name}: {byte_len} bytes does not match shape {shape:?} at {}",
            S::DTYPE.tag()
        )));
    }
    let raw = c.take(byte_len)?;
    let width = S::DTYPE.size_bytes();
    let data = (0..count)
        .map(|i| S::read_le(&raw[i * width..(i + 1) * width]))
        .collect();
    Ok((name, shape, data))
}

fn split_header(bytes: &[u8]) -> Result<(&str, &str, usize)> {
    let first_nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| corrupt("missing magic line"))?;
    let magic = std::str::from_utf8(&bytes[..first_nl])
        .map_err(|_| corrupt("magic line is not UTF-8"))?;
    let rest = &bytes[first_nl + 1..];
    let second_nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| corrupt("missing header line"))?;
    let header = std::str::from_utf8(&rest[..second_nl])
        .map_err(|_| corrupt("header line is not UTF-8"))?;
    Ok((magic, header, first_nl + 1 + second_nl + 1))
}

fn check_magic(magic: &str) -> Result<()> {
    let mut parts = magic.split_whitespace();
    if parts.next() != Some(MAGIC) {
        return Err(corrupt("not a checkpoint file (bad magic)"));
    }
    match parts.next().and_then(|v| v.parse::<u32>().ok()) {
        Some(VERSION) => Ok(()),
        Some(v) => Err(corrupt(format!(
            "format version {v} is not supported (this build reads version {VERSION})"
        ))),
        None => Err(corrupt("magic line carries no version")),
    }
}

/// Reads just enough of a checkpoint to learn its scalar precision, so
/// callers can pick the right generic instantiation before a full load.
pub fn peek_dtype(path: &Path) -> Result<Dtype> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (magic, header_json, _) = split_header(&bytes)?;
    check_magic(magic)?;
    #[derive(Deserialize)]
    struct DtypeOnly {
        dtype: String,
    }
    let h: DtypeOnly = serde_json::from_str(header_json)
        .map_err(|e| corrupt(format!("unreadable header: {e}")))?;
    Dtype::parse(&h.dtype)
        .ok_or_else(|| corrupt(format!("unknown dtype tag {:?}", h.dtype)))
}

/// Restores a trainer (model, optimizer state, RNG, epoch counter).
pub fn load<S: Scalar>(path: &Path) -> Result<Trainer<S>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (magic, header_json, body_at) = split_header(&bytes)?;
    check_magic(magic)?;
    let header: Header = serde_json::from_str(header_json)
        .map_err(|e| corrupt(format!("unreadable header: {e}")))?;
    let dtype = Dtype::parse(&header.dtype)
        .ok_or_else(|| corrupt(format!("unknown dtype tag {:?}", header.dtype)))?;
    if dtype != S::DTYPE {
        return Err(corrupt(format!(
            "stored at {} but loaded as {}; dispatch on peek_dtype first",
            dtype.tag(),
            S::DTYPE.tag()
        )));
    }

    let mut model = FlowModel::<S>::new(header.model)?;
    model
        .point_flow
        .set_permutations(&header.point_permutations)?;
    model
        .prior_flow
        .set_permutations(&header.prior_permutations)?;

    let mut cursor = Cursor {
        bytes: &bytes[body_at..],
        pos: 0,
    };
    let mut blocks = std::collections::HashMap::new();
    while !cursor.done() {
        let (name, shape, data) = read_block::<S>(&mut cursor)?;
        if blocks.insert(name.clone(), (shape, data)).is_some() {
            return Err(corrupt(format!("duplicate block {name}")));
        }
    }

    let mut take = |name: &str, shape: &[usize]| -> Result<Vec<S>> {
        let (s, data) = blocks
            .remove(name)
            .ok_or_else(|| corrupt(format!("missing block {name}")))?;
        if s != shape {
            return Err(corrupt(format!(
                "block {name}: stored shape {s:?}, model wants {shape:?}"
            )));
        }
        Ok(data)
    };

    let names_shapes: Vec<(String, Vec<usize>)> = model
        .params
        .iter()
        .map(|p| (p.name.clone(), p.shape.clone()))
        .collect();
    let mut adam = Adam {
        t: header.adam_t,
        m: Vec::with_capacity(names_shapes.len()),
        v: Vec::with_capacity(names_shapes.len()),
    };
    for (name, shape) in &names_shapes {
        let data = take(name, shape)?;
        model
            .params
            .by_name_mut(name)
            .expect("parameter exists by construction")
            .data = data;
        adam.m.push(take(&format!("adam.m.{name}"), shape)?);
        adam.v.push(take(&format!("adam.v.{name}"), shape)?);
    }
    if !blocks.is_empty() {
        let mut extra: Vec<&String> = blocks.keys().collect();
        extra.sort();
        return Err(corrupt(format!("unexpected blocks: {extra:?}")));
    }

    header.train.validate()?;
    Ok(Trainer {
        model,
        config: header.train,
        adam,
        rng: header.rng,
        next_epoch: header.next_epoch,
    })
}

/// Loads only the model, for commands that never touch the optimizer.
pub fn load_model<S: Scalar>(path: &Path) -> Result<FlowModel<S>> {
    load(path).map(|t| t.model)
}
