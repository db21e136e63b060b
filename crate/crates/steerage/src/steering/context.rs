//! Steering context: a policy bound to a model shape, plus gate statistics.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::math::{add_scaled, dot, sigmoid};
use crate::model::{HeadHook, ModelConfig};
use crate::probe::SteeringPolicy;

const GATE_HIST_BINS: usize = 10;

/// Which token positions receive the steering shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SteerPositions {
    /// Every position of every forward pass (the default; matches steering
    /// the whole teacher-forced sequence and every generated token).
    #[default]
    All,
    /// Only the final position of each pass; callers must update the
    /// target via [`SteeringContext::set_final_position`] before forwarding.
    FinalOnly,
}

/// Gate observations for one cluster.
#[derive(Debug, Clone, Serialize, Default)]
pub struct ClusterGateStats {
    pub count: u64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Counts over `GATE_HIST_BINS` equal bins spanning
    /// `[alpha*beta, alpha*(1+beta)]`.
    pub histogram: Vec<u64>,
    #[serde(skip)]
    sum: f64,
}

/// Running gate statistics across all forward passes of a context.
#[derive(Debug, Clone, Serialize, Default)]
pub struct SteeringStats {
    pub heads_fired: u64,
    pub mean_gate: f64,
    pub min_gate: f64,
    pub max_gate: f64,
    pub per_cluster: BTreeMap<usize, ClusterGateStats>,
    #[serde(skip)]
    gate_sum: f64,
}

impl SteeringStats {
    fn record(&mut self, cluster: usize, gate: f64, lo: f64, hi: f64) {
        if self.heads_fired == 0 {
            self.min_gate = gate;
            self.max_gate = gate;
        } else {
            self.min_gate = self.min_gate.min(gate);
            self.max_gate = self.max_gate.max(gate);
        }
        self.heads_fired += 1;
        self.gate_sum += gate;
        self.mean_gate = self.gate_sum / self.heads_fired as f64;

        let entry = self
            .per_cluster
            .entry(cluster)
            .or_insert_with(|| ClusterGateStats {
                histogram: vec![0; GATE_HIST_BINS],
                min: gate,
                max: gate,
                ..ClusterGateStats::default()
            });
        entry.count += 1;
        entry.sum += gate;
        entry.mean = entry.sum / entry.count as f64;
        entry.min = entry.min.min(gate);
        entry.max = entry.max.max(gate);
        let span = (hi - lo).max(f64::MIN_POSITIVE);
        let bin = (((gate - lo) / span) * GATE_HIST_BINS as f64)
            .floor()
            .clamp(0.0, (GATE_HIST_BINS - 1) as f64) as usize;
        entry.histogram[bin] += 1;
    }
}

/// A steering policy validated against a model configuration, ready to be
/// passed as the forward hook. Single-owner per evaluation thread; the
/// policy and model stay shared and immutable.
pub struct SteeringContext<'a> {
    policy: &'a SteeringPolicy,
    positions: SteerPositions,
    final_position: Option<usize>,
    /// (layer, head) -> indices into `policy.entries`, ordered by cluster.
    by_head: BTreeMap<(usize, usize), Vec<usize>>,
    pub stats: SteeringStats,
}

impl<'a> SteeringContext<'a> {
    /// Bind a policy to a model shape. Policies referencing heads outside
    /// the model, or vectors of the wrong width, are rejected here.
    pub fn new(policy: &'a SteeringPolicy, config: &ModelConfig) -> Result<Self> {
        policy.validate()?;
        if policy.head_dim != config.head_dim {
            return Err(Error::Policy(format!(
                "policy head_dim {} != model head_dim {}",
                policy.head_dim, config.head_dim
            )));
        }
        let mut by_head: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (i, e) in policy.entries.iter().enumerate() {
            if e.layer >= config.n_layers || e.head >= config.n_heads {
                return Err(Error::Policy(format!(
                    "policy entry targets head ({},{}) outside a {}x{} model",
                    e.layer, e.head, config.n_layers, config.n_heads
                )));
            }
            by_head.entry((e.layer, e.head)).or_default().push(i);
        }
        Ok(Self {
            policy,
            positions: SteerPositions::All,
            final_position: None,
            by_head,
            stats: SteeringStats::default(),
        })
    }

    pub fn with_positions(mut self, positions: SteerPositions) -> Self {
        self.positions = positions;
        self
    }

    /// Target position for [`SteerPositions::FinalOnly`] mode.
    pub fn set_final_position(&mut self, pos: usize) {
        self.final_position = Some(pos);
    }

    pub fn policy(&self) -> &SteeringPolicy {
        self.policy
    }

    /// Inclusive gate bounds implied by sigmoid in (0, 1):
    /// `[alpha*beta, alpha*(1+beta)]`.
    pub fn gate_bounds(&self) -> (f64, f64) {
        (
            self.policy.alpha * self.policy.beta,
            self.policy.alpha * (1.0 + self.policy.beta),
        )
    }

    pub fn stats_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.stats).expect("stats serialize")
    }
}

impl HeadHook for SteeringContext<'_> {
    fn head_delta(
        &mut self,
        layer: usize,
        head: usize,
        pos: usize,
        activation: &[f64],
    ) -> Option<Vec<f64>> {
        if self.positions == SteerPositions::FinalOnly && Some(pos) != self.final_position {
            return None;
        }
        let indices = self.by_head.get(&(layer, head))?;
        let (lo, hi) = self.gate_bounds();
        let mut delta = vec![0.0; activation.len()];
        for &i in indices {
            let e = &self.policy.entries[i];
            // The gate reads the pre-steering activation; cluster shifts
            // then add on top of each other.
            let p = sigmoid(dot(&e.theta, activation));
            let gate = self.policy.alpha * (1.0 - p + self.policy.beta);
            self.stats.record(e.cluster, gate, lo, hi);
            add_scaled(&mut delta, &e.v, gate);
        }
        Some(delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::{Normalization, PolicyEntry, Provenance, VectorMode};

    fn tiny_policy(alpha: f64, beta: f64, entries: Vec<PolicyEntry>) -> SteeringPolicy {
        SteeringPolicy {
            n_clusters: entries.iter().map(|e| e.cluster).max().unwrap_or(0) + 1,
            alpha,
            beta,
            top_k: 1,
            vector_mode: VectorMode::ProbeWeight,
            normalization: Normalization::UnitL2,
            head_dim: 2,
            entries,
            provenance: Provenance::default(),
        }
    }

    fn entry(cluster: usize, layer: usize, head: usize) -> PolicyEntry {
        PolicyEntry {
            cluster,
            layer,
            head,
            val_accuracy: 1.0,
            v: vec![1.0, 0.0],
            theta: vec![0.0, 1.0],
        }
    }

    fn config() -> ModelConfig {
        ModelConfig {
            n_layers: 2,
            n_heads: 2,
            head_dim: 2,
            vocab_size: 4,
            max_seq: 8,
        }
    }

    #[test]
    fn out_of_range_head_rejected_at_construction() {
        let policy = tiny_policy(1.0, 0.0, vec![entry(0, 5, 0)]);
        assert!(SteeringContext::new(&policy, &config()).is_err());
    }

    #[test]
    fn head_dim_mismatch_rejected() {
        let policy = tiny_policy(1.0, 0.0, vec![entry(0, 0, 0)]);
        let mut cfg = config();
        cfg.head_dim = 3;
        cfg.vocab_size = 4;
        assert!(SteeringContext::new(&policy, &cfg).is_err());
    }

    #[test]
    fn clusters_on_same_head_sum_their_shifts() {
        let policy = tiny_policy(2.0, 0.0, vec![entry(0, 0, 0), entry(1, 0, 0)]);
        let mut ctx = SteeringContext::new(&policy, &config()).unwrap();
        // theta = [0,1], activation orthogonal to theta -> p = 0.5,
        // gate = 2 * 0.5 = 1 per cluster, two clusters -> delta = 2 * v.
        let delta = ctx.head_delta(0, 0, 0, &[3.0, 0.0]).unwrap();
        assert!((delta[0] - 2.0).abs() < 1e-12);
        assert_eq!(delta[1], 0.0);
        assert_eq!(ctx.stats.heads_fired, 2);
        assert_eq!(ctx.stats.per_cluster.len(), 2);
    }

    #[test]
    fn gate_stats_stay_in_bounds() {
        let policy = tiny_policy(15.0, 0.1, vec![entry(0, 0, 0)]);
        let mut ctx = SteeringContext::new(&policy, &config()).unwrap();
        for a in [-100.0, -1.0, 0.0, 2.0, 50.0] {
            ctx.head_delta(0, 0, 0, &[0.0, a]);
        }
        let (lo, hi) = ctx.gate_bounds();
        assert!(ctx.stats.min_gate >= lo);
        assert!(ctx.stats.max_gate <= hi);
        assert!((lo - 1.5).abs() < 1e-12);
        assert!((hi - 16.5).abs() < 1e-12);
    }

    #[test]
    fn final_only_mode_gates_on_position() {
        let policy = tiny_policy(1.0, 0.0, vec![entry(0, 0, 0)]);
        let mut ctx = SteeringContext::new(&policy, &config())
            .unwrap()
            .with_positions(SteerPositions::FinalOnly);
        ctx.set_final_position(3);
        assert!(ctx.head_delta(0, 0, 1, &[1.0, 0.0]).is_none());
        assert!(ctx.head_delta(0, 0, 3, &[1.0, 0.0]).is_some());
    }
}
