//! Self-describing text archive: a `key: value` manifest followed by named
//! tensors whose elements are written as IEEE-754 bit patterns in hex, so
//! every value round-trips exactly.
//!
//! ```text
//! format: neuroflap-network
//! version: 1
//! mode: dense
//! tensor estimator.layer0.w_in f32 150 6
//! 3f800000 bd4ccccd ...
//! ```

use std::fmt::Write as _;

use crate::error::{Error, Result};

const WORDS_PER_LINE: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: TensorData,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Archive {
    manifest: Vec<(String, String)>,
    tensors: Vec<Tensor>,
}

impl Archive {
    pub fn new(format: &str, version: u32) -> Self {
        let mut a = Self::default();
        a.set("format", format);
        a.set("version", version);
        a
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        assert!(
            !key.contains(':') && !key.contains('\n') && !value.contains('\n'),
            "manifest entries are single-line key: value pairs"
        );
        match self.manifest.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.manifest.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.manifest
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Format(format!("missing manifest key {key:?}")))
    }

    pub fn parse_key<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| Error::Format(format!("bad value {raw:?} for {key:?}")))
    }

    pub fn expect_format(&self, format: &str, version: u32) -> Result<()> {
        let got = self.require("format")?;
        if got != format {
            return Err(Error::Format(format!("expected {format:?} archive, found {got:?}")));
        }
        let v: u32 = self.parse_key("version")?;
        if v != version {
            return Err(Error::Format(format!("unsupported {format} version {v}")));
        }
        Ok(())
    }

    pub fn put_f32(&mut self, name: &str, dims: &[usize], data: &[f32]) {
        assert_eq!(dims.iter().product::<usize>(), data.len(), "tensor {name} shape");
        self.tensors.push(Tensor {
            name: name.into(),
            dims: dims.to_vec(),
            data: TensorData::F32(data.to_vec()),
        });
    }

    pub fn put_f64(&mut self, name: &str, dims: &[usize], data: &[f64]) {
        assert_eq!(dims.iter().product::<usize>(), data.len(), "tensor {name} shape");
        self.tensors.push(Tensor {
            name: name.into(),
            dims: dims.to_vec(),
            data: TensorData::F64(data.to_vec()),
        });
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Format(format!("missing tensor {name:?}")))
    }

    pub fn has_tensor(&self, name: &str) -> bool {
        self.tensors.iter().any(|t| t.name == name)
    }

    /// Fetch an `f32` tensor and check its shape.
    pub fn f32(&self, name: &str, dims: &[usize]) -> Result<Vec<f32>> {
        let t = self.tensor(name)?;
        if t.dims != dims {
            return Err(Error::Format(format!(
                "tensor {name:?} has shape {:?}, expected {dims:?}",
                t.dims
            )));
        }
        match &t.data {
            TensorData::F32(v) => Ok(v.clone()),
            TensorData::F64(_) => Err(Error::Format(format!("tensor {name:?} is not f32"))),
        }
    }

    pub fn f64(&self, name: &str, dims: &[usize]) -> Result<Vec<f64>> {
        let t = self.tensor(name)?;
        if t.dims != dims {
            return Err(Error::Format(format!(
                "tensor {name:?} has shape {:?}, expected {dims:?}",
                t.dims
            )));
        }
        match &t.data {
            TensorData::F64(v) => Ok(v.clone()),
            TensorData::F32(_) => Err(Error::Format(format!("tensor {name:?} is not f64"))),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.manifest {
            let _ = writeln!(out, "{k}: {v}");
        }
        for t in &self.tensors {
            let (dtype, words): (&str, Vec<String>) = match &t.data {
                TensorData::F32(v) => ("f32", v.iter().map(|x| format!("{:08x}", x.to_bits())).collect()),
                TensorData::F64(v) => ("f64", v.iter().map(|x| format!("{:016x}", x.to_bits())).collect()),
            };
            let dims: Vec<String> = t.dims.iter().map(|d| d.to_string()).collect();
            let _ = writeln!(out, "tensor {} {} {}", t.name, dtype, dims.join(" "));
            for chunk in words.chunks(WORDS_PER_LINE) {
                let _ = writeln!(out, "{}", chunk.join(" "));
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut archive = Archive::default();
        let mut lines = text.lines().enumerate().peekable();
        while let Some((no, line)) = lines.next() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(header) = line.strip_prefix("tensor ") {
                let mut parts = header.split_whitespace();
                let name = parts
                    .next()
                    .ok_or_else(|| Error::Format(format!("line {}: tensor without name", no + 1)))?;
                let dtype = parts
                    .next()
                    .ok_or_else(|| Error::Format(format!("line {}: tensor without dtype", no + 1)))?;
                let dims = parts
                    .map(|d| d.parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::Format(format!("line {}: bad tensor shape", no + 1)))?;
                let count: usize = dims.iter().product();
                let mut words = Vec::with_capacity(count);
                while words.len() < count {
                    let (_, l) = lines.next().ok_or_else(|| {
                        Error::Format(format!("tensor {name:?} truncated"))
                    })?;
                    words.extend(l.split_whitespace().map(str::to_owned));
                }
                if words.len() != count {
                    return Err(Error::Format(format!("tensor {name:?} has extra elements")));
                }
                let bad = |w: &str| Error::Format(format!("tensor {name:?}: bad word {w:?}"));
                let data = match dtype {
                    "f32" => TensorData::F32(
                        words
                            .iter()
                            .map(|w| u32::from_str_radix(w, 16).map(f32::from_bits).map_err(|_| bad(w)))
                            .collect::<Result<_>>()?,
                    ),
                    "f64" => TensorData::F64(
                        words
                            .iter()
                            .map(|w| u64::from_str_radix(w, 16).map(f64::from_bits).map_err(|_| bad(w)))
                            .collect::<Result<_>>()?,
                    ),
                    other => return Err(Error::Format(format!("unknown dtype {other:?}"))),
                };
                archive.tensors.push(Tensor {
                    name: name.to_string(),
                    dims,
                    data,
                });
            } else {
                let (k, v) = line
                    .split_once(':')
                    .ok_or_else(|| Error::Format(format!("line {}: expected key: value", no + 1)))?;
                archive.manifest.push((k.trim().to_string(), v.trim().to_string()));
            }
        }
        Ok(archive)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trips_any_bits(bits32 in proptest::collection::vec(any::<u32>(), 0..40),
                                bits64 in proptest::collection::vec(any::<u64>(), 0..40)) {
            let v32: Vec<f32> = bits32.iter().map(|&b| f32::from_bits(b)).collect();
            let v64: Vec<f64> = bits64.iter().map(|&b| f64::from_bits(b)).collect();
            let mut a = Archive::new("test", 1);
            a.set("note", "hello: world");
            a.put_f32("a", &[v32.len()], &v32);
            a.put_f64("b.c", &[1, v64.len()], &v64);
            let back = Archive::parse(&a.to_text()).unwrap();
            let r32: Vec<u32> = back.f32("a", &[v32.len()]).unwrap().iter().map(|x| x.to_bits()).collect();
            let r64: Vec<u64> = back.f64("b.c", &[1, v64.len()]).unwrap().iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(r32, bits32);
            prop_assert_eq!(r64, bits64);
            prop_assert_eq!(back.get("note"), Some("hello: world"));
        }
    }

    #[test]
    fn rejects_wrong_shape_and_format() {
        let mut a = Archive::new("x", 1);
        a.put_f32("w", &[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let back = Archive::parse(&a.to_text()).unwrap();
        assert!(back.f32("w", &[4]).is_err());
        assert!(back.expect_format("y", 1).is_err());
        assert!(back.expect_format("x", 2).is_err());
        assert!(Archive::parse("tensor w f32 3\n00000000\n").is_err());
    }
}
