//! Checkpoint files.
//!
//! ```text
//! "CNFDCKPT" | version u32 | fingerprint u64 | record count u32 |
//!     (name length u32 | name utf-8 | tensor in CNFD format) * count
//! ```
//!
//! Records: `arch.config` (architecture fields as f64), every parameter in
//! model order, `<bn>.running_mean` / `<bn>.running_var` for every batch-norm
//! layer, then any caller-supplied extras (normalization statistics, baseline
//! performance). All integers are little-endian.

use std::path::Path;

use super::{ArchitectureConfig, Layout, ModelParameters, Parameter, RunningStats};
use crate::error::{Error, Result};
use crate::tensor::{read_tensor, write_tensor, Scalar, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CNFDCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

const CONFIG_RECORD: &str = "arch.config";

/// A model plus named auxiliary tensors stored alongside it.
#[derive(Clone, Debug)]
pub struct Checkpoint<T> {
    pub model: ModelParameters<T>,
    pub extras: Vec<(String, Tensor<f64>)>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn extra(&self, name: &str) -> Option<&Tensor<f64>> {
        self.extras.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

fn push_record<T: Scalar>(out: &mut Vec<u8>, name: &str, t: &Tensor<T>) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    write_tensor(t, out);
}

pub fn encode_checkpoint<T: Scalar>(model: &ModelParameters<T>, extras: &[(String, Tensor<f64>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&model.fingerprint().to_le_bytes());
    let count = 1 + model.params.len() + 2 * model.running.len() + extras.len();
    out.extend_from_slice(&(count as u32).to_le_bytes());
    let cfg = model.config.to_record();
    push_record(&mut out, CONFIG_RECORD, &Tensor::new(vec![cfg.len()], cfg).expect("non-empty"));
    for p in &model.params {
        push_record(&mut out, &p.name, &p.value);
    }
    for r in &model.running {
        let c = r.mean.len();
        push_record(&mut out, &format!("{}.running_mean", r.name), &Tensor::new(vec![c], r.mean.clone()).expect("c > 0"));
        push_record(&mut out, &format!("{}.running_var", r.name), &Tensor::new(vec![c], r.var.clone()).expect("c > 0"));
    }
    for (name, t) in extras {
        push_record(&mut out, name, t);
    }
    out
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptCheckpoint(msg.into())
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(corrupt(format!("truncated: needed {n} bytes, {} left", bytes.len())));
    }
    let (h, t) = bytes.split_at(n);
    *bytes = t;
    Ok(h)
}

fn take_u32(bytes: &mut &[u8]) -> Result<u32> {
    Ok(u32::from_le_bytes(take(bytes, 4)?.try_into().expect("4 bytes")))
}

struct RawRecord {
    bytes_start: usize,
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let mut s = bytes;
    if take(&mut s, 8).map_err(|_| corrupt("file shorter than header"))? != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            what: "checkpoint",
            expected: "CNFDCKPT".into(),
        });
    }
    let version = take_u32(&mut s)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            what: "checkpoint",
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let fingerprint = u64::from_le_bytes(take(&mut s, 8)?.try_into().expect("8 bytes"));
    let count = take_u32(&mut s)? as usize;

    let mut records: Vec<(String, Tensor<f64>)> = Vec::with_capacity(count.min(4096));
    let mut raw: Vec<RawRecord> = Vec::new();
    for _ in 0..count {
        let len = take_u32(&mut s)? as usize;
        let name = std::str::from_utf8(take(&mut s, len)?)
            .map_err(|_| corrupt("record name is not utf-8"))?
            .to_string();
        raw.push(RawRecord {
            bytes_start: bytes.len() - s.len(),
        });
        // Parse once as f64 to walk the stream; model records are re-read in T below.
        let t: Tensor<f64> = read_tensor(&mut s).map_err(|e| corrupt(format!("record {name}: {e}")))?;
        records.push((name, t));
    }
    if !s.is_empty() {
        return Err(corrupt(format!("{} trailing bytes", s.len())));
    }

    let (first, cfg_t) = records.first().ok_or_else(|| corrupt("no records"))?;
    if first != CONFIG_RECORD {
        return Err(corrupt(format!("first record is {first}, expected {CONFIG_RECORD}")));
    }
    let config = ArchitectureConfig::from_record(cfg_t.data())?;
    config.validate_structure().map_err(|e| corrupt(e.to_string()))?;
    if config.fingerprint() != fingerprint {
        return Err(corrupt("header fingerprint does not match stored architecture"));
    }
    let layout = Layout::plan(&config);

    let read_as_t = |i: usize| -> Result<Tensor<T>> {
        let mut rs = &bytes[raw[i].bytes_start..];
        read_tensor(&mut rs).map_err(|e| corrupt(e.to_string()))
    };

    let mut idx = 1;
    let mut params = Vec::with_capacity(layout.specs.len());
    for spec in &layout.specs {
        let (name, t) = records.get(idx).ok_or_else(|| corrupt(format!("missing parameter {}", spec.name)))?;
        if *name != spec.name || t.shape() != spec.shape.as_slice() {
            return Err(corrupt(format!(
                "record {idx}: expected {} {:?}, found {name} {:?}",
                spec.name,
                spec.shape,
                t.shape()
            )));
        }
        let value = read_as_t(idx)?;
        params.push(Parameter {
            name: spec.name.clone(),
            grad: Tensor::zeros(spec.shape.clone()),
            value,
        });
        idx += 1;
    }
    let mut running = Vec::with_capacity(layout.bn_names.len());
    for (bn, c) in &layout.bn_names {
        let mut pair = Vec::with_capacity(2);
        for suffix in ["running_mean", "running_var"] {
            let want = format!("{bn}.{suffix}");
            let (name, t) = records.get(idx).ok_or_else(|| corrupt(format!("missing {want}")))?;
            if *name != want || t.shape() != [*c] {
                return Err(corrupt(format!("record {idx}: expected {want}, found {name}")));
            }
            pair.push(read_as_t(idx)?.into_data());
            idx += 1;
        }
        let var = pair.pop().expect("two entries");
        let mean = pair.pop().expect("two entries");
        running.push(RunningStats {
            name: bn.clone(),
            mean,
            var,
        });
    }
    let extras = records.split_off(idx);
    Ok(Checkpoint {
        model: ModelParameters {
            config,
            layout,
            params,
            running,
        },
        extras,
    })
}

pub fn save_checkpoint<T: Scalar>(
    model: &ModelParameters<T>,
    extras: &[(String, Tensor<f64>)],
    path: &Path,
) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model, extras)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Load and require that the stored architecture matches `expected`.
pub fn load_checkpoint_expecting<T: Scalar>(path: &Path, expected: &ArchitectureConfig) -> Result<Checkpoint<T>> {
    let ck = load_checkpoint(path)?;
    let found = ck.model.fingerprint();
    if found != expected.fingerprint() {
        return Err(Error::FingerprintMismatch {
            found,
            expected: expected.fingerprint(),
        });
    }
    Ok(ck)
}
