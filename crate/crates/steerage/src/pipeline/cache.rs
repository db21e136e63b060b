//! Activation cache: probing samples persisted between the extract and
//! train stages.
//!
//! Same binary container as the tensor archive, with one `f64` tensor per
//! (pair, layer, head, position) keyed `q{pair}.{l}.{h}.{pos}` and a `meta`
//! header section recording what the cache was computed from.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{read_container_bytes, write_atomic, TensorArchive};
use crate::pipeline::config::CaptureKind;
use crate::probe::{ProbingData, ProbingSample};

pub const CACHE_FORMAT: &str = "activation-cache";
pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CacheMeta {
    pub config_hash: String,
    pub capture: CaptureKind,
    pub model_fingerprint: String,
    /// Hash of the weight archive bytes; catches same-architecture models
    /// with different weights.
    pub model_hash: String,
    pub dataset_hash: String,
    pub n_layers: usize,
    pub n_heads: usize,
    pub head_dim: usize,
    pub n_pairs: usize,
}

#[derive(Serialize, Deserialize)]
struct SampleMeta {
    pair: usize,
    question: usize,
    position: usize,
    label: u8,
}

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    format: String,
    version: u32,
    meta: CacheMeta,
    samples: Vec<SampleMeta>,
    tensors: serde_json::Value,
}

pub fn save_cache(data: &ProbingData, meta: &CacheMeta, path: &Path) -> Result<()> {
    let mut archive = TensorArchive::new();
    let mut samples = Vec::with_capacity(data.samples.len());
    for s in &data.samples {
        for l in 0..data.n_layers {
            for h in 0..data.n_heads {
                let start = (l * data.n_heads + h) * data.head_dim;
                archive.insert_f64(
                    &format!("q{}.{l}.{h}.{}", s.pair_index, s.position),
                    vec![data.head_dim],
                    &s.concat[start..start + data.head_dim],
                );
            }
        }
        samples.push(SampleMeta {
            pair: s.pair_index,
            question: s.question_id,
            position: s.position,
            label: s.label,
        });
    }
    let header = CacheHeader {
        format: CACHE_FORMAT.to_string(),
        version: CACHE_VERSION,
        meta: meta.clone(),
        samples,
        tensors: archive.header_value(),
    };
    let header_bytes = serde_json::to_vec(&header)
        .map_err(|e| Error::Data(format!("cache header serialization: {e}")))?;
    let mut out = Vec::with_capacity(8 + header_bytes.len() + archive.payload().len());
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    out.extend_from_slice(archive.payload());
    write_atomic(path, &out)
}

pub fn load_cache(path: &Path) -> Result<(ProbingData, CacheMeta)> {
    let bytes = fs::read(path)?;
    cache_from_bytes(&bytes)
}

pub fn cache_from_bytes(bytes: &[u8]) -> Result<(ProbingData, CacheMeta)> {
    let (header, payload) =
        read_container_bytes(bytes).map_err(|e| Error::Corrupt(format!("cache container: {e}")))?;
    let header: CacheHeader =
        serde_json::from_value(header).map_err(|e| Error::Corrupt(format!("cache header: {e}")))?;
    if header.format != CACHE_FORMAT {
        return Err(Error::Corrupt(format!(
            "not an activation cache (format `{}`)",
            header.format
        )));
    }
    if header.version != CACHE_VERSION {
        return Err(Error::VersionMismatch {
            found: header.version,
            supported: CACHE_VERSION,
        });
    }
    let archive = TensorArchive::from_header_value(&header.tensors, payload)
        .map_err(|e| Error::Corrupt(format!("cache tensors: {e}")))?;
    let meta = header.meta;
    let mut samples = Vec::with_capacity(header.samples.len());
    for s in &header.samples {
        let mut concat = Vec::with_capacity(meta.n_layers * meta.n_heads * meta.head_dim);
        for l in 0..meta.n_layers {
            for h in 0..meta.n_heads {
                let name = format!("q{}.{l}.{h}.{}", s.pair, s.position);
                let values = archive
                    .tensor_checked(&name, &[meta.head_dim])
                    .map_err(|e| Error::Corrupt(format!("cache tensor `{name}`: {e}")))?;
                concat.extend_from_slice(&values);
            }
        }
        samples.push(ProbingSample {
            pair_index: s.pair,
            question_id: s.question,
            position: s.position,
            label: s.label,
            concat,
        });
    }
    Ok((
        ProbingData {
            n_layers: meta.n_layers,
            n_heads: meta.n_heads,
            head_dim: meta.head_dim,
            samples,
        },
        meta,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_data() -> ProbingData {
        ProbingData {
            n_layers: 2,
            n_heads: 2,
            head_dim: 3,
            samples: vec![
                ProbingSample {
                    pair_index: 0,
                    question_id: 0,
                    position: 4,
                    label: 1,
                    concat: (0..12).map(f64::from).collect(),
                },
                ProbingSample {
                    pair_index: 1,
                    question_id: 0,
                    position: 5,
                    label: 0,
                    concat: (12..24).map(f64::from).collect(),
                },
            ],
        }
    }

    fn meta() -> CacheMeta {
        CacheMeta {
            config_hash: "c0ffee".into(),
            capture: CaptureKind::LastToken,
            model_fingerprint: "layers=2,heads=2,head_dim=3,vocab=10,max_seq=8".into(),
            model_hash: "abad1dea".into(),
            dataset_hash: "d474".into(),
            n_layers: 2,
            n_heads: 2,
            head_dim: 3,
            n_pairs: 2,
        }
    }

    #[test]
    fn cache_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("activations.bin");
        let data = sample_data();
        save_cache(&data, &meta(), &path).unwrap();
        let (back, m) = load_cache(&path).unwrap();
        assert_eq!(back, data);
        assert_eq!(m, meta());
    }

    #[test]
    fn truncation_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("activations.bin");
        save_cache(&sample_data(), &meta(), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert!(matches!(
            cache_from_bytes(&bytes[..bytes.len() - 4]),
            Err(Error::Corrupt(_))
        ));
    }
}
