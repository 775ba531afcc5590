//! NSW1: a flat little-endian container of named `f32` tensors.
//!
//! ```text
//! "NSW1" | u32 version = 1 | u32 count
//! count × ( u16 name_len | name (UTF-8) | u8 rank | rank × u32 extent | product(extent) × f32 )
//! ```
//! No alignment padding; trailing bytes are an error.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"NSW1";
const VERSION: u32 = 1;

/// Ordered named tensors; order is preserved through encode/decode.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorContainer {
    pub tensors: Vec<(String, Tensor<f32>)>,
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    format: &'static str,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8], format: &'static str) -> Self {
        Reader {
            bytes,
            pos: 0,
            format,
        }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::format(
                self.format,
                format!("truncated: needed {n} bytes at offset {}", self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::format(self.format, "length overflow"))?,
        )?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn string(&mut self, len: usize) -> Result<String> {
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|e| Error::format(self.format, e))
    }

    pub fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self
            .take(4)
            .map_err(|_| Error::format(self.format, "missing magic"))?;
        if got != magic {
            return Err(Error::format(self.format, format!("bad magic {got:?}")));
        }
        Ok(())
    }
}

pub(crate) fn put_str16(out: &mut Vec<u8>, s: &str, format: &'static str) -> Result<()> {
    let len =
        u16::try_from(s.len()).map_err(|_| Error::format(format, format!("name too long: {s}")))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

pub(crate) fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

impl TensorContainer {
    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor<f32>) {
        self.tensors.push((name.into(), t));
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            put_str16(&mut out, name, "NSW1")?;
            let rank =
                u8::try_from(t.rank()).map_err(|_| Error::format("NSW1", "rank above 255"))?;
            out.push(rank);
            for &e in t.shape() {
                let e = u32::try_from(e).map_err(|_| Error::format("NSW1", "extent above u32"))?;
                out.extend_from_slice(&e.to_le_bytes());
            }
            put_f32s(&mut out, t.data());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "NSW1");
        r.magic(MAGIC)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format(
                "NSW1",
                format!("unsupported version {version}"),
            ));
        }
        let count = r.u32()?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = r.string(len)?;
            let rank = r.u8()? as usize;
            let shape = (0..rank)
                .map(|_| r.u32().map(|e| e as usize))
                .collect::<Result<Vec<_>>>()?;
            let n = shape.iter().try_fold(1usize, |a, &e| a.checked_mul(e));
            let n = n.ok_or_else(|| Error::format("NSW1", format!("`{name}` is too large")))?;
            let data = r.f32s(n)?;
            let t = Tensor::new(shape, data)
                .map_err(|e| Error::format("NSW1", format!("`{name}`: {e}")))?;
            tensors.push((name, t));
        }
        if r.remaining() != 0 {
            return Err(Error::format(
                "NSW1",
                format!("{} trailing bytes", r.remaining()),
            ));
        }
        Ok(TensorContainer { tensors })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }
}
