//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"LDCP"
//! version u32
//! meta    u32 count, then (key: u32 len + bytes, value: u32 len + bytes) pairs
//! section u32 count, then per section:
//!           name: u32 len + bytes
//!           params: u32 count, then per parameter:
//!             name: u32 len + bytes
//!             ndim: u32, dims: u64 x ndim
//!             data: f64 LE x product(dims)
//! ```
//!
//! Meta keys are sorted, so writing the same state twice yields identical
//! bytes. Sections hold named [`ParamSet`]s: model weights, optimizer moments,
//! anything with the same layout.

use crate::error::{Error, Result};
use crate::nn::ParamSet;
use ndarray::ArrayD;
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"LDCP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Default)]
pub struct Blob {
    pub meta: BTreeMap<String, String>,
    pub sections: Vec<(String, ParamSet)>,
}

impl Blob {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        self.meta.insert(key.into(), value.to_string());
    }

    pub fn meta_str(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| Error::Integrity(format!("checkpoint missing meta key `{key}`")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.meta_str(key)?
            .parse::<T>()
            .map_err(|_| Error::Integrity(format!("checkpoint meta key `{key}` unparseable")))
    }

    pub fn push_section(&mut self, name: impl Into<String>, ps: ParamSet) {
        self.sections.push((name.into(), ps));
    }

    pub fn section(&self, name: &str) -> Result<&ParamSet> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p)
            .ok_or_else(|| Error::Integrity(format!("checkpoint missing section `{name}`")))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            write_str(&mut out, k);
            write_str(&mut out, v);
        }
        out.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for (name, ps) in &self.sections {
            write_str(&mut out, name);
            out.extend_from_slice(&(ps.len() as u32).to_le_bytes());
            for (pname, value) in ps.names().iter().zip(ps.values().iter()) {
                write_str(&mut out, pname);
                out.extend_from_slice(&(value.ndim() as u32).to_le_bytes());
                for d in value.shape() {
                    out.extend_from_slice(&(*d as u64).to_le_bytes());
                }
                for x in value.iter() {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Blob> {
        let mut r = Cursor { bytes, pos: 0, path };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(Error::parse(path, "bad checkpoint magic"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::parse(
                path,
                format!("unsupported checkpoint version {version}"),
            ));
        }
        let mut blob = Blob::new();
        let n_meta = r.u32()? as usize;
        for _ in 0..n_meta {
            let k = r.string()?;
            let v = r.string()?;
            blob.meta.insert(k, v);
        }
        let n_sections = r.u32()? as usize;
        for _ in 0..n_sections {
            let name = r.string()?;
            let n_params = r.u32()? as usize;
            let mut ps = ParamSet::new();
            for _ in 0..n_params {
                let pname = r.string()?;
                let ndim = r.u32()? as usize;
                let mut dims = Vec::with_capacity(ndim);
                for _ in 0..ndim {
                    dims.push(r.u64()? as usize);
                }
                let n: usize = dims.iter().product();
                let mut data = Vec::with_capacity(n);
                for _ in 0..n {
                    data.push(r.f64()?);
                }
                let arr = ArrayD::from_shape_vec(dims, data)
                    .map_err(|e| Error::parse(path, e.to_string()))?;
                ps.add(pname, arr);
            }
            blob.sections.push((name, ps));
        }
        Ok(blob)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Blob> {
        let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        f.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        Blob::decode(&bytes, path)
    }
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::parse(self.path, "truncated checkpoint"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::parse(self.path, "bad utf8 string"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::ArrayD;

    #[test]
    fn round_trip_preserves_bits_and_bytes() {
        let mut ps = ParamSet::new();
        ps.add(
            "layer.w",
            ArrayD::from_shape_vec(vec![2, 3], vec![1.0, -2.5, 3e-9, f64::MIN_POSITIVE, 0.0, 7.7])
                .unwrap(),
        );
        let mut blob = Blob::new();
        blob.set_meta("format_version", FORMAT_VERSION);
        blob.set_meta("f", 4);
        blob.push_section("model", ps);

        let bytes = blob.encode();
        let back = Blob::decode(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back.meta_str("f").unwrap(), "4");
        let ps2 = back.section("model").unwrap();
        assert_eq!(ps2.names(), &["layer.w".to_string()]);
        for (a, b) in blob.sections[0]
            .1
            .values()[0]
            .iter()
            .zip(ps2.values()[0].iter())
        {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        // Deterministic bytes.
        assert_eq!(bytes, back.encode());
    }

    #[test]
    fn truncation_is_a_parse_error() {
        let mut blob = Blob::new();
        blob.set_meta("k", "v");
        let mut bytes = blob.encode();
        bytes.truncate(bytes.len() - 1);
        assert!(Blob::decode(&bytes, Path::new("mem")).is_err());
    }
}
