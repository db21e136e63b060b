//! Tensor archive: the on-disk weight format.
//!
//! Layout: an 8-byte little-endian header length, a UTF-8 JSON header
//! mapping tensor name to `{"shape": [...], "dtype": "f32", "offset": n}`,
//! then the raw little-endian payload. Offsets are relative to the payload
//! start. Policy and cache files reuse the same binary container with an
//! enveloped header (`{"tensors": ..., ...}`); see [`read_container_bytes`].

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar storage type inside the payload. Everything is converted to `f64`
/// on load; model weights are written back as `f32`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn byte_width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Dtype::F32),
            "f64" => Ok(Dtype::F64),
            other => Err(Error::MalformedHeader(format!("unknown dtype `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawEntry {
    shape: Vec<usize>,
    dtype: String,
    offset: u64,
}

/// One tensor's metadata inside an archive.
#[derive(Debug, Clone)]
pub struct TensorEntry {
    pub shape: Vec<usize>,
    pub dtype: Dtype,
    pub offset: usize,
}

impl TensorEntry {
    pub fn element_count(&self) -> Result<usize> {
        self.shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::MalformedHeader("shape product overflows".into()))
    }
}

/// Named tensors plus their raw payload, fully memory-resident.
#[derive(Debug, Clone, Default)]
pub struct TensorArchive {
    entries: BTreeMap<String, TensorEntry>,
    payload: Vec<u8>,
}

impl TensorArchive {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a tensor stored as `f32` (the model-weight dtype).
    pub fn insert_f32(&mut self, name: &str, shape: Vec<usize>, values: &[f64]) {
        let offset = self.payload.len();
        for &v in values {
            self.payload.extend_from_slice(&(v as f32).to_le_bytes());
        }
        self.insert_entry(name, shape, Dtype::F32, offset, values.len());
    }

    /// Append a tensor stored as `f64` (lossless, used by policy and cache
    /// files).
    pub fn insert_f64(&mut self, name: &str, shape: Vec<usize>, values: &[f64]) {
        let offset = self.payload.len();
        for &v in values {
            self.payload.extend_from_slice(&v.to_le_bytes());
        }
        self.insert_entry(name, shape, Dtype::F64, offset, values.len());
    }

    fn insert_entry(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        dtype: Dtype,
        offset: usize,
        n: usize,
    ) {
        debug_assert_eq!(shape.iter().product::<usize>(), n);
        self.entries.insert(
            name.to_string(),
            TensorEntry {
                shape,
                dtype,
                offset,
            },
        );
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn entry(&self, name: &str) -> Option<&TensorEntry> {
        self.entries.get(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Decode a tensor into `f64` values, validating shape bookkeeping and
    /// finiteness.
    pub fn tensor(&self, name: &str) -> Result<(Vec<usize>, Vec<f64>)> {
        let entry = self
            .entries
            .get(name)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))?;
        let count = entry.element_count()?;
        let width = entry.dtype.byte_width();
        let nbytes = count
            .checked_mul(width)
            .ok_or_else(|| Error::SizeMismatch(format!("`{name}` byte size overflows")))?;
        let end = entry
            .offset
            .checked_add(nbytes)
            .ok_or_else(|| Error::SizeMismatch(format!("`{name}` extends past payload")))?;
        if end > self.payload.len() {
            return Err(Error::SizeMismatch(format!(
                "`{name}` declares {nbytes} bytes at offset {} over a {}-byte payload",
                entry.offset,
                self.payload.len()
            )));
        }
        let bytes = &self.payload[entry.offset..end];
        let mut out = Vec::with_capacity(count);
        match entry.dtype {
            Dtype::F32 => {
                for chunk in bytes.chunks_exact(4) {
                    out.push(f64::from(f32::from_le_bytes(chunk.try_into().unwrap())));
                }
            }
            Dtype::F64 => {
                for chunk in bytes.chunks_exact(8) {
                    out.push(f64::from_le_bytes(chunk.try_into().unwrap()));
                }
            }
        }
        if !out.iter().all(|v| v.is_finite()) {
            return Err(Error::Corrupt(format!(
                "non-finite value in tensor `{name}`"
            )));
        }
        Ok((entry.shape.clone(), out))
    }

    /// Decode a tensor and check its shape exactly.
    pub fn tensor_checked(&self, name: &str, expected: &[usize]) -> Result<Vec<f64>> {
        let (shape, values) = self.tensor(name)?;
        if shape != expected {
            return Err(Error::ShapeMismatch {
                name: name.to_string(),
                expected: expected.to_vec(),
                found: shape,
            });
        }
        Ok(values)
    }

    fn header_map(&self) -> BTreeMap<String, RawEntry> {
        self.entries
            .iter()
            .map(|(name, e)| {
                (
                    name.clone(),
                    RawEntry {
                        shape: e.shape.clone(),
                        dtype: e.dtype.as_str().to_string(),
                        offset: e.offset as u64,
                    },
                )
            })
            .collect()
    }

    /// Header as a JSON value (flat name -> entry map), for callers that
    /// envelope it inside a larger container header.
    pub fn header_value(&self) -> serde_json::Value {
        serde_json::to_value(self.header_map()).expect("header serializes")
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    /// Serialize with the flat-map header.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header_map()).expect("header serializes");
        let mut out = Vec::with_capacity(8 + header.len() + self.payload.len());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    /// Parse an archive whose header is the flat name -> entry map.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, payload) = split_container(bytes)?;
        let raw: BTreeMap<String, RawEntry> = serde_json::from_slice(header)
            .map_err(|e| Error::MalformedHeader(format!("header JSON: {e}")))?;
        Self::from_raw_entries(raw, payload.to_vec())
    }

    /// Parse from an already-decoded header value (the `tensors` section of
    /// an enveloped container).
    pub fn from_header_value(header: &serde_json::Value, payload: Vec<u8>) -> Result<Self> {
        let raw: BTreeMap<String, RawEntry> = serde_json::from_value(header.clone())
            .map_err(|e| Error::MalformedHeader(format!("tensors section: {e}")))?;
        Self::from_raw_entries(raw, payload)
    }

    fn from_raw_entries(raw: BTreeMap<String, RawEntry>, payload: Vec<u8>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut spans: Vec<(usize, usize, String)> = Vec::new();
        for (name, r) in raw {
            let dtype = Dtype::parse(&r.dtype)?;
            let offset = usize::try_from(r.offset)
                .map_err(|_| Error::MalformedHeader(format!("`{name}` offset overflows")))?;
            let entry = TensorEntry {
                shape: r.shape,
                dtype,
                offset,
            };
            let nbytes = entry
                .element_count()?
                .checked_mul(dtype.byte_width())
                .ok_or_else(|| Error::SizeMismatch(format!("`{name}` byte size overflows")))?;
            let end = offset
                .checked_add(nbytes)
                .ok_or_else(|| Error::SizeMismatch(format!("`{name}` extends past payload")))?;
            if end > payload.len() {
                return Err(Error::SizeMismatch(format!(
                    "`{name}` declares {nbytes} bytes at offset {offset} over a {}-byte payload",
                    payload.len()
                )));
            }
            spans.push((offset, end, name.clone()));
            entries.insert(name, entry);
        }
        spans.sort();
        for pair in spans.windows(2) {
            if pair[1].0 < pair[0].1 {
                return Err(Error::MalformedHeader(format!(
                    "tensors `{}` and `{}` overlap",
                    pair[0].2, pair[1].2
                )));
            }
        }
        Ok(Self { entries, payload })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Split an 8-byte-length-prefixed container into header and payload.
pub fn split_container(bytes: &[u8]) -> Result<(&[u8], &[u8])> {
    if bytes.len() < 8 {
        return Err(Error::MalformedHeader(format!(
            "file too short for length prefix ({} bytes)",
            bytes.len()
        )));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap());
    let header_len = usize::try_from(header_len)
        .map_err(|_| Error::MalformedHeader("header length overflows".into()))?;
    let rest = &bytes[8..];
    if header_len > rest.len() {
        return Err(Error::MalformedHeader(format!(
            "header length {header_len} exceeds remaining {} bytes",
            rest.len()
        )));
    }
    Ok((&rest[..header_len], &rest[header_len..]))
}

/// Parse an enveloped container: the header is an arbitrary JSON object
/// instead of a flat tensor map. Policy and cache files use this.
pub fn read_container_bytes(bytes: &[u8]) -> Result<(serde_json::Value, Vec<u8>)> {
    let (header, payload) = split_container(bytes)?;
    let value: serde_json::Value = serde_json::from_slice(header)
        .map_err(|e| Error::MalformedHeader(format!("container header JSON: {e}")))?;
    Ok((value, payload.to_vec()))
}

pub fn read_container(path: &Path) -> Result<(serde_json::Value, Vec<u8>)> {
    read_container_bytes(&fs::read(path)?)
}

pub fn write_container(path: &Path, header: &serde_json::Value, payload: &[u8]) -> Result<()> {
    let header_bytes = serde_json::to_vec(header)
        .map_err(|e| Error::Corrupt(format!("container header failed to serialize: {e}")))?;
    let mut out = Vec::with_capacity(8 + header_bytes.len() + payload.len());
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    out.extend_from_slice(payload);
    write_atomic(path, &out)
}

/// Write via a temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = match dir {
        Some(d) => d.join(format!(
            ".{}.tmp",
            path.file_name().and_then(|n| n.to_str()).unwrap_or("out")
        )),
        None => Path::new(&format!(
            ".{}.tmp",
            path.file_name().and_then(|n| n.to_str()).unwrap_or("out")
        ))
        .to_path_buf(),
    };
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
