//! Binary container for named tensors plus JSON metadata.
//!
//! Layout (little-endian): magic `MLAG`, u32 version, u64 metadata length,
//! metadata JSON, u64 tensor count, then per tensor: u32 name length, name
//! bytes (UTF-8), u8 dtype (0 = f32, 1 = f64), u8 rank, u64 dims[rank], raw
//! element data. Nothing may follow the last tensor.

use std::path::Path;

use indexmap::IndexMap;
use serde_json::Value;

use crate::diffcore::{DType, Float, Tensor};
use crate::error::{Error, Result};
use crate::model::ParamStore;

pub const MAGIC: &[u8; 4] = b"MLAG";
pub const FORMAT_VERSION: u32 = 1;

/// A tensor in either supported precision.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl AnyTensor {
    pub fn dtype(&self) -> DType {
        match self {
            AnyTensor::F32(_) => DType::F32,
            AnyTensor::F64(_) => DType::F64,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            AnyTensor::F32(t) => t.shape(),
            AnyTensor::F64(t) => t.shape(),
        }
    }

    /// Value in precision `T`, converting if necessary.
    pub fn to<T: Float>(&self) -> Tensor<T> {
        match self {
            AnyTensor::F32(t) => t.cast(),
            AnyTensor::F64(t) => t.cast(),
        }
    }
}

impl From<Tensor<f32>> for AnyTensor {
    fn from(t: Tensor<f32>) -> Self {
        AnyTensor::F32(t.detached())
    }
}

impl From<Tensor<f64>> for AnyTensor {
    fn from(t: Tensor<f64>) -> Self {
        AnyTensor::F64(t.detached())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub metadata: Value,
    pub tensors: IndexMap<String, AnyTensor>,
}

impl Default for Checkpoint {
    fn default() -> Self {
        Checkpoint {
            metadata: Value::Object(Default::default()),
            tensors: IndexMap::new(),
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Format {
            offset: self.pos as u64,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let left = self.buf.len() - self.pos;
        if n > left {
            return Err(self.fail(format!("truncated {what}: need {n} bytes, {left} left")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        let at = self.pos;
        let v = self.u64(what)?;
        usize::try_from(v).map_err(|_| Error::Format {
            offset: at as u64,
            reason: format!("{what} {v} does not fit in memory"),
        })
    }
}

fn decode_data<T: Float>(raw: &[u8]) -> Vec<T> {
    raw.chunks_exact(T::DTYPE.size()).map(T::read_le).collect()
}

impl Checkpoint {
    pub fn new(metadata: Value) -> Self {
        Checkpoint {
            metadata,
            tensors: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: impl Into<AnyTensor>) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(Error::Contract(format!("duplicate checkpoint tensor {name}")));
        }
        self.tensors.insert(name, t.into());
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&AnyTensor> {
        self.tensors.get(name)
    }

    /// Appends every parameter and buffer of `store` under its own name.
    pub fn insert_store<T: Float>(&mut self, store: &ParamStore<T>) -> Result<()>
    where
        AnyTensor: From<Tensor<T>>,
    {
        for (name, t) in store.tensors() {
            self.insert(name, t.clone())?;
        }
        Ok(())
    }

    /// Overwrites `store` with the same-named tensors of this checkpoint.
    pub fn restore_store<T: Float>(&self, store: &mut ParamStore<T>) -> Result<()> {
        store.load_from(|name| self.get(name).map(AnyTensor::to))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.metadata)
            .map_err(|e| Error::Contract(format!("metadata not serialisable: {e}")))?;
        let mut out = Vec::with_capacity(
            64 + meta.len()
                + self
                    .tensors
                    .values()
                    .map(|t| t.shape().iter().product::<usize>() * t.dtype().size())
                    .sum::<usize>(),
        );
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.tensors.len() as u64).to_le_bytes());
        for (name, t) in &self.tensors {
            let shape = t.shape();
            if shape.len() > u8::MAX as usize {
                return Err(Error::Contract(format!("tensor {name} has rank {}", shape.len())));
            }
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.dtype().code());
            out.push(shape.len() as u8);
            for &d in shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            match t {
                AnyTensor::F32(t) => t.data().iter().for_each(|v| v.write_le(&mut out)),
                AnyTensor::F64(t) => t.data().iter().for_each(|v| v.write_le(&mut out)),
            }
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(Error::Format {
                offset: 0,
                reason: "bad magic, not a checkpoint".into(),
            });
        }
        let at = r.pos;
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Format {
                offset: at as u64,
                reason: format!("unsupported version {version} (expected {FORMAT_VERSION})"),
            });
        }
        let meta_len = r.len("metadata length")?;
        let at = r.pos;
        let meta = r.take(meta_len, "metadata")?;
        let metadata: Value = serde_json::from_slice(meta).map_err(|e| Error::Format {
            offset: at as u64,
            reason: format!("metadata is not valid JSON: {e}"),
        })?;
        let count = r.len("tensor count")?;
        let mut tensors = IndexMap::new();
        for _ in 0..count {
            let at = r.pos;
            let name_len = r.u32("name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
                .map_err(|_| Error::Format {
                    offset: at as u64 + 4,
                    reason: "tensor name is not UTF-8".into(),
                })?
                .to_string();
            let dt_at = r.pos;
            let dtype = DType::from_code(r.u8("dtype")?).ok_or_else(|| Error::Format {
                offset: dt_at as u64,
                reason: format!("unknown dtype code for {name}"),
            })?;
            let rank = r.u8("rank")? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.len("dimension")?);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .and_then(|n| n.checked_mul(dtype.size()))
                .ok_or_else(|| r.fail(format!("tensor {name} is implausibly large")))?;
            let raw = r.take(numel, "tensor data")?;
            let t = match dtype {
                DType::F32 => AnyTensor::F32(Tensor::new(shape, decode_data(raw))?),
                DType::F64 => AnyTensor::F64(Tensor::new(shape, decode_data(raw))?),
            };
            if tensors.insert(name.clone(), t).is_some() {
                return Err(Error::Format {
                    offset: at as u64,
                    reason: format!("duplicate tensor {name}"),
                });
            }
        }
        if r.pos != buf.len() {
            return Err(r.fail(format!("{} trailing bytes after the last tensor", buf.len() - r.pos)));
        }
        Ok(Checkpoint { metadata, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut c = Checkpoint::new(serde_json::json!({"step": 3, "lr": 0.0002, "name": "x"}));
        c.insert(
            "a.weight",
            Tensor::<f32>::new(vec![2, 2], vec![1.0, -2.5, 3.25, 0.1]).unwrap(),
        )
        .unwrap();
        c.insert("b", Tensor::<f64>::new(vec![3], vec![0.1, 0.2, 1e-300]).unwrap())
            .unwrap();
        c.insert("s", Tensor::<f32>::scalar(7.0)).unwrap();
        c
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let bytes = sample().to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, sample());
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = sample().to_bytes().unwrap();
        for cut in [0, 3, 7, 20, bytes.len() - 1] {
            match Checkpoint::from_bytes(&bytes[..cut]) {
                Err(Error::Format { offset, .. }) => assert!(offset as usize <= cut),
                other => panic!("expected format error, got {other:?}"),
            }
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(Checkpoint::from_bytes(&extra), Err(Error::Format { .. })));
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::Format { offset: 0, .. })
        ));
        let mut bytes = sample().to_bytes().unwrap();
        bytes[4] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::Format { offset: 4, .. })
        ));
    }
}
