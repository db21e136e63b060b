//! The training half of the pipeline: per-question directional
//! representations, K-means clustering into hallucination patterns,
//! per-(cluster, layer, head) truthfulness probes, top-K head selection,
//! and steering-policy assembly.

mod assemble;
mod dataset;
mod direction;
mod kmeans;
mod logistic;
mod policy;
mod selection;

pub use assemble::train_probes_for_clusters;
pub use dataset::{build_probing_dataset, ProbingData, ProbingSample};
pub use direction::{
    capture_positions, directional_representation, pair_activations, CaptureMode, DirectionalRep,
};
pub use kmeans::{kmeans, nearest_centroid, ClusterModel};
pub use logistic::{loss_and_grad, train_probe, train_probe_presplit, Probe, ProbeTrainConfig};
pub use policy::{
    build_policy, load_policy, policy_from_bytes, policy_hash, policy_to_bytes, save_policy,
    Normalization, PolicyConfig, PolicyEntry, Provenance, SteeringPolicy, VectorMode,
    POLICY_FORMAT, POLICY_VERSION,
};
pub use selection::select_top_k_heads;
