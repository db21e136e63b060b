//! Steering-policy assembly and its on-disk container.
//!
//! A policy is, per cluster, the top-K heads with their steering vectors
//! and probe parameters, plus the intensity hyperparameters. On disk it
//! reuses the tensor-archive container: an enveloped JSON header with a
//! `policy` section and named `f64` vectors in the payload.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{fnv1a, l2_norm};
use crate::model::{read_container_bytes, TensorArchive};
use crate::probe::logistic::Probe;
use crate::probe::selection::select_top_k_heads;

pub const POLICY_FORMAT: &str = "steering-policy";
pub const POLICY_VERSION: u32 = 1;

/// Source of the steering vector `v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorMode {
    /// The probe weight itself (the default throughout).
    ProbeWeight,
    /// Truthful-mean minus untruthful-mean of training activations.
    MassMeanDiff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    UnitL2,
    None,
}

/// Where a policy came from, embedded for reproducibility checks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub model_fingerprint: String,
    pub dataset_hash: String,
}

/// One steered head.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEntry {
    pub cluster: usize,
    pub layer: usize,
    pub head: usize,
    pub val_accuracy: f64,
    /// Steering vector, length `head_dim`.
    pub v: Vec<f64>,
    /// Probe parameters gating the intensity, length `head_dim`.
    pub theta: Vec<f64>,
}

/// The serialized artifact applied at inference.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringPolicy {
    pub n_clusters: usize,
    pub alpha: f64,
    pub beta: f64,
    pub top_k: usize,
    pub vector_mode: VectorMode,
    pub normalization: Normalization,
    pub head_dim: usize,
    pub entries: Vec<PolicyEntry>,
    pub provenance: Provenance,
}

/// Hyperparameters for policy assembly.
#[derive(Debug, Clone, Copy)]
pub struct PolicyConfig {
    pub alpha: f64,
    pub beta: f64,
    pub top_k: usize,
    pub vector_mode: VectorMode,
    pub normalization: Normalization,
}

/// Assemble a policy from per-cluster probe grids. Every cluster
/// contributes its top-K usable heads.
pub fn build_policy(
    probes_by_cluster: &[Vec<Probe>],
    cfg: &PolicyConfig,
    head_dim: usize,
    provenance: Provenance,
) -> Result<SteeringPolicy> {
    if probes_by_cluster.is_empty() {
        return Err(Error::InvalidArg("policy: no clusters".into()));
    }
    if !(cfg.alpha >= 0.0 && cfg.alpha.is_finite() && cfg.beta.is_finite()) {
        return Err(Error::InvalidArg(format!(
            "policy: bad intensity parameters alpha={} beta={}",
            cfg.alpha, cfg.beta
        )));
    }
    let mut entries = Vec::new();
    for (cluster, probes) in probes_by_cluster.iter().enumerate() {
        if probes.is_empty() {
            return Err(Error::Degenerate(format!(
                "cluster {cluster} has no probes"
            )));
        }
        let top = select_top_k_heads(probes, cfg.top_k)?;
        if top.is_empty() {
            return Err(Error::Degenerate(format!(
                "cluster {cluster} has no usable (non-degenerate) probes"
            )));
        }
        for probe in top {
            if probe.theta.len() != head_dim {
                return Err(Error::DimMismatch(format!(
                    "probe ({},{},{}) has dim {}, expected {head_dim}",
                    probe.cluster,
                    probe.layer,
                    probe.head,
                    probe.theta.len()
                )));
            }
            let mut v = match cfg.vector_mode {
                VectorMode::ProbeWeight => probe.theta.clone(),
                VectorMode::MassMeanDiff => probe.mean_diff.clone(),
            };
            if cfg.normalization == Normalization::UnitL2 {
                let norm = l2_norm(&v);
                if norm <= 0.0 {
                    return Err(Error::Numeric(format!(
                        "steering vector for head ({},{}) in cluster {cluster} is zero",
                        probe.layer, probe.head
                    )));
                }
                for x in &mut v {
                    *x /= norm;
                }
            }
            entries.push(PolicyEntry {
                cluster,
                layer: probe.layer,
                head: probe.head,
                val_accuracy: probe.val_accuracy,
                v,
                theta: probe.theta.clone(),
            });
        }
    }
    let policy = SteeringPolicy {
        n_clusters: probes_by_cluster.len(),
        alpha: cfg.alpha,
        beta: cfg.beta,
        top_k: cfg.top_k,
        vector_mode: cfg.vector_mode,
        normalization: cfg.normalization,
        head_dim,
        entries,
        provenance,
    };
    policy.validate()?;
    Ok(policy)
}

impl SteeringPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.head_dim == 0 {
            return Err(Error::Policy("head_dim is zero".into()));
        }
        let mut seen: BTreeSet<(usize, usize, usize)> = BTreeSet::new();
        for e in &self.entries {
            if e.cluster >= self.n_clusters {
                return Err(Error::Policy(format!(
                    "entry references cluster {} of {}",
                    e.cluster, self.n_clusters
                )));
            }
            if e.v.len() != self.head_dim || e.theta.len() != self.head_dim {
                return Err(Error::Policy(format!(
                    "entry ({},{},{}) vector length mismatch",
                    e.cluster, e.layer, e.head
                )));
            }
            if !e.v.iter().chain(e.theta.iter()).all(|x| x.is_finite()) {
                return Err(Error::Policy("non-finite steering vector".into()));
            }
            if !seen.insert((e.cluster, e.layer, e.head)) {
                return Err(Error::Policy(format!(
                    "duplicate entry for cluster {} head ({},{})",
                    e.cluster, e.layer, e.head
                )));
            }
        }
        Ok(())
    }

    /// Entries of one cluster, in stored order.
    pub fn cluster_entries(&self, cluster: usize) -> impl Iterator<Item = &PolicyEntry> {
        self.entries.iter().filter(move |e| e.cluster == cluster)
    }
}

// ── serialization ───────────────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
struct EntryMeta {
    c: usize,
    l: usize,
    h: usize,
    val_accuracy: f64,
    v_name: String,
    theta_name: String,
}

#[derive(Serialize, Deserialize)]
struct PolicySection {
    #[serde(rename = "C")]
    n_clusters: usize,
    alpha: f64,
    beta: f64,
    #[serde(rename = "K")]
    top_k: usize,
    vector_mode: VectorMode,
    normalization: Normalization,
    head_dim: usize,
    entries: Vec<EntryMeta>,
    provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct PolicyHeader {
    format: String,
    version: u32,
    policy: PolicySection,
    tensors: serde_json::Value,
}

/// Serialize a policy to container bytes. Canonical: identical policies
/// produce identical bytes.
pub fn policy_to_bytes(policy: &SteeringPolicy) -> Result<Vec<u8>> {
    policy.validate()?;
    let mut archive = TensorArchive::new();
    let mut entries = Vec::with_capacity(policy.entries.len());
    for e in &policy.entries {
        let v_name = format!("v.c{}.l{}.h{}", e.cluster, e.layer, e.head);
        let theta_name = format!("theta.c{}.l{}.h{}", e.cluster, e.layer, e.head);
        archive.insert_f64(&v_name, vec![policy.head_dim], &e.v);
        archive.insert_f64(&theta_name, vec![policy.head_dim], &e.theta);
        entries.push(EntryMeta {
            c: e.cluster,
            l: e.layer,
            h: e.head,
            val_accuracy: e.val_accuracy,
            v_name,
            theta_name,
        });
    }
    let header = PolicyHeader {
        format: POLICY_FORMAT.to_string(),
        version: POLICY_VERSION,
        policy: PolicySection {
            n_clusters: policy.n_clusters,
            alpha: policy.alpha,
            beta: policy.beta,
            top_k: policy.top_k,
            vector_mode: policy.vector_mode,
            normalization: policy.normalization,
            head_dim: policy.head_dim,
            entries,
            provenance: policy.provenance.clone(),
        },
        tensors: archive.header_value(),
    };
    let header_value = serde_json::to_value(&header)
        .map_err(|e| Error::Policy(format!("header serialization: {e}")))?;
    let header_bytes = serde_json::to_vec(&header_value)
        .map_err(|e| Error::Policy(format!("header serialization: {e}")))?;
    let mut out = Vec::with_capacity(8 + header_bytes.len() + archive.payload().len());
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    out.extend_from_slice(archive.payload());
    Ok(out)
}

pub fn save_policy(policy: &SteeringPolicy, path: &Path) -> Result<()> {
    let bytes = policy_to_bytes(policy)?;
    crate::model::write_atomic(path, &bytes)
}

/// Parse a policy from container bytes. Header and payload damage map to
/// corrupt-file errors; version skew is reported distinctly.
pub fn policy_from_bytes(bytes: &[u8]) -> Result<SteeringPolicy> {
    let (header, payload) = read_container_bytes(bytes)
        .map_err(|e| Error::Corrupt(format!("policy container: {e}")))?;
    let header: PolicyHeader = serde_json::from_value(header)
        .map_err(|e| Error::Corrupt(format!("policy header: {e}")))?;
    if header.format != POLICY_FORMAT {
        return Err(Error::Corrupt(format!(
            "not a policy file (format `{}`)",
            header.format
        )));
    }
    if header.version != POLICY_VERSION {
        return Err(Error::VersionMismatch {
            found: header.version,
            supported: POLICY_VERSION,
        });
    }
    let archive = TensorArchive::from_header_value(&header.tensors, payload)
        .map_err(|e| Error::Corrupt(format!("policy tensors: {e}")))?;
    let section = header.policy;
    let mut entries = Vec::with_capacity(section.entries.len());
    for m in &section.entries {
        let fetch = |name: &str| -> Result<Vec<f64>> {
            archive
                .tensor_checked(name, &[section.head_dim])
                .map_err(|e| Error::Corrupt(format!("policy vector `{name}`: {e}")))
        };
        entries.push(PolicyEntry {
            cluster: m.c,
            layer: m.l,
            head: m.h,
            val_accuracy: m.val_accuracy,
            v: fetch(&m.v_name)?,
            theta: fetch(&m.theta_name)?,
        });
    }
    let policy = SteeringPolicy {
        n_clusters: section.n_clusters,
        alpha: section.alpha,
        beta: section.beta,
        top_k: section.top_k,
        vector_mode: section.vector_mode,
        normalization: section.normalization,
        head_dim: section.head_dim,
        entries,
        provenance: section.provenance,
    };
    policy.validate()?;
    Ok(policy)
}

pub fn load_policy(path: &Path) -> Result<SteeringPolicy> {
    policy_from_bytes(&fs::read(path)?)
}

/// Hash of the serialized policy, recorded in evaluation reports.
pub fn policy_hash(policy: &SteeringPolicy) -> Result<String> {
    Ok(format!("{:016x}", fnv1a(&policy_to_bytes(policy)?)))
}
