//! Cluster-level probe training: the bridge between clustered questions and
//! the per-(cluster, layer, head) probe grid.

use std::collections::BTreeMap;

use crate::corpus::{split_indices, upsample_with_replacement, SplitSpec};
use crate::error::{Error, Result};
use crate::math::DetRng;
use crate::probe::dataset::ProbingData;
use crate::probe::logistic::{train_probe_presplit, Probe, ProbeTrainConfig};

/// Train one probe per (layer, head) for every cluster.
///
/// The 4:1 split happens once per cluster at the sample level, so all heads
/// of a cluster share the same train/validation rows. With `upsample` on
/// (few-shot setting), smaller clusters' training sides are re-drawn with
/// replacement up to the largest cluster's training count; validation rows
/// are never touched.
pub fn train_probes_for_clusters(
    data: &ProbingData,
    cluster_of_question: &BTreeMap<usize, usize>,
    n_clusters: usize,
    split: &SplitSpec,
    cfg: &ProbeTrainConfig,
    upsample: bool,
) -> Result<Vec<Vec<Probe>>> {
    if n_clusters == 0 {
        return Err(Error::InvalidArg("no clusters".into()));
    }

    // Per-cluster sample indices and their train/val split.
    let split_root = DetRng::new(split.seed);
    let mut cluster_splits: Vec<(Vec<usize>, Vec<usize>)> = Vec::with_capacity(n_clusters);
    for c in 0..n_clusters {
        let indices = data.indices_for_questions(|q| cluster_of_question.get(&q) == Some(&c));
        if indices.is_empty() {
            return Err(Error::Degenerate(format!("cluster {c} holds no samples")));
        }
        let cluster_spec = SplitSpec {
            seed: split_root.fork(c as u64).seed(),
            ..*split
        };
        match split_indices(indices.len(), &cluster_spec, |j| {
            data.samples[indices[j]].question_id
        }) {
            Ok((train_local, val_local)) => {
                let train = train_local.iter().map(|&j| indices[j]).collect();
                let val = val_local.iter().map(|&j| indices[j]).collect();
                cluster_splits.push((train, val));
            }
            // Too small to hold out anything: train on all of it and let
            // the empty validation side mark the probes degenerate.
            Err(Error::Degenerate(_)) => cluster_splits.push((indices, Vec::new())),
            Err(e) => return Err(e),
        }
    }

    if upsample {
        let target = cluster_splits
            .iter()
            .map(|(train, _)| train.len())
            .max()
            .unwrap_or(0);
        let up_root = DetRng::new(split.seed ^ 0x5eed_ba5e);
        for (c, (train, _)) in cluster_splits.iter_mut().enumerate() {
            if train.len() < target {
                let mut rng = up_root.fork(c as u64);
                *train = upsample_with_replacement(train, target, &mut rng);
            }
        }
    }

    let mut by_cluster = Vec::with_capacity(n_clusters);
    for (c, (train, val)) in cluster_splits.iter().enumerate() {
        let mut probes = Vec::with_capacity(data.n_layers * data.n_heads);
        for l in 0..data.n_layers {
            for h in 0..data.n_heads {
                let (train_x, train_y) = data.head_slice(l, h, train);
                let (val_x, val_y) = data.head_slice(l, h, val);
                let probe = train_probe_presplit(&train_x, &train_y, &val_x, &val_y, cfg)?;
                probes.push(probe.at(c, l, h));
            }
        }
        by_cluster.push(probes);
    }
    Ok(by_cluster)
}
