//! Binary model container shared by the EDMD and NARX model files.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic  b"KTURBMDL"
//! 8       4     type tag (b"EDMD" or b"NARX")
//! 12      4     format version (u32)
//! 16      8     header length H in bytes (u64)
//! 24      H     UTF-8 JSON header: {"meta": {...}, "arrays": [{"name", "rows", "cols"}, ...]}
//! 24+H    ...   payload: each array in header order, rows*cols f64 values, row-major
//! ```
//!
//! Every floating-point quantity lives in the payload so that round trips are
//! bit-exact; the JSON header only carries names, integers and strings.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const MAGIC: &[u8; 8] = b"KTURBMDL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    meta: Value,
    arrays: Vec<ArrayEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub tag: [u8; 4],
    pub meta: Value,
    pub arrays: Vec<(String, Matrix)>,
}

impl ModelFile {
    pub fn new(tag: [u8; 4], meta: Value) -> Self {
        ModelFile {
            tag,
            meta,
            arrays: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, m: Matrix) {
        self.arrays.push((name.to_string(), m));
    }

    pub fn push_scalar(&mut self, name: &str, v: f64) {
        self.push(name, Matrix::from_element(1, 1, v));
    }

    pub fn push_vector(&mut self, name: &str, v: &[f64]) {
        self.push(name, Matrix::from_row_slice(1, v.len(), v));
    }

    pub fn array(&self, name: &str) -> Result<&Matrix> {
        self.arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::Malformed(format!("missing array `{name}`")))
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        let m = self.array(name)?;
        if m.len() != 1 {
            return Err(Error::Malformed(format!("`{name}` is not a scalar")));
        }
        Ok(m[0])
    }

    pub fn vector(&self, name: &str) -> Result<Vec<f64>> {
        let m = self.array(name)?;
        if m.nrows() > 1 && m.ncols() > 1 {
            return Err(Error::Malformed(format!("`{name}` is not a vector")));
        }
        Ok(m.iter().copied().collect())
    }

    pub fn meta_str(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Malformed(format!("missing string field `{key}`")))
    }

    pub fn meta_u64(&self, key: &str) -> Result<u64> {
        self.meta
            .get(key)
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Malformed(format!("missing integer field `{key}`")))
    }

    pub fn meta_strings(&self, key: &str) -> Result<Vec<String>> {
        let arr = self
            .meta
            .get(key)
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Malformed(format!("missing list field `{key}`")))?;
        arr.iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| Error::Malformed(format!("non-string entry in `{key}`")))
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            meta: self.meta.clone(),
            arrays: self
                .arrays
                .iter()
                .map(|(name, m)| ArrayEntry {
                    name: name.clone(),
                    rows: m.nrows(),
                    cols: m.ncols(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header).map_err(|e| Error::Malformed(e.to_string()))?;
        let payload_len: usize = self.arrays.iter().map(|(_, m)| m.len() * 8).sum();
        let mut out = Vec::with_capacity(24 + header.len() + payload_len);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.tag);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, m) in &self.arrays {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    out.extend_from_slice(&m[(i, j)].to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], expected_tag: [u8; 4]) -> Result<Self> {
        if bytes.len() < 24 || &bytes[..8] != MAGIC {
            return Err(Error::Malformed("not a model file (bad magic)".into()));
        }
        let tag: [u8; 4] = bytes[8..12].try_into().expect("slice of 4");
        if tag != expected_tag {
            return Err(Error::Malformed(format!(
                "model type `{}` where `{}` was expected",
                String::from_utf8_lossy(&tag),
                String::from_utf8_lossy(&expected_tag)
            )));
        }
        let version = u32::from_le_bytes(bytes[12..16].try_into().expect("slice of 4"));
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let header_len = u64::from_le_bytes(bytes[16..24].try_into().expect("slice of 8")) as usize;
        let header_end = 24usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Malformed("truncated header".into()))?;
        let header: Header = serde_json::from_slice(&bytes[24..header_end])
            .map_err(|e| Error::Malformed(format!("header: {e}")))?;

        let mut pos = header_end;
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for entry in header.arrays {
            let count = entry
                .rows
                .checked_mul(entry.cols)
                .ok_or_else(|| Error::Malformed(format!("array `{}` too large", entry.name)))?;
            let end = count
                .checked_mul(8)
                .and_then(|b| pos.checked_add(b))
                .filter(|&e| e <= bytes.len())
                .ok_or_else(|| Error::Malformed(format!("truncated payload in `{}`", entry.name)))?;
            let values: Vec<f64> = bytes[pos..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            pos = end;
            arrays.push((entry.name, Matrix::from_row_slice(entry.rows, entry.cols, &values)));
        }
        if pos != bytes.len() {
            return Err(Error::Malformed("trailing bytes after payload".into()));
        }
        Ok(ModelFile {
            tag,
            meta: header.meta,
            arrays,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path, expected_tag: [u8; 4]) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?, expected_tag)
    }
}
