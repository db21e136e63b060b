//! Top-K head selection by probe validation accuracy.

use crate::error::{Error, Result};
use crate::probe::logistic::Probe;

/// The `k` non-degenerate probes with highest validation accuracy, ties
/// broken by (layer, head) ascending so selection is fully deterministic.
/// Returns all usable probes when fewer than `k` exist.
pub fn select_top_k_heads(probes: &[Probe], k: usize) -> Result<Vec<&Probe>> {
    if k == 0 {
        return Err(Error::InvalidArg("head selection: k must be >= 1".into()));
    }
    let mut usable: Vec<&Probe> = probes.iter().filter(|p| !p.degenerate).collect();
    usable.sort_by(|a, b| {
        b.val_accuracy
            .partial_cmp(&a.val_accuracy)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.layer.cmp(&b.layer))
            .then(a.head.cmp(&b.head))
    });
    usable.truncate(k);
    Ok(usable)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probe(layer: usize, head: usize, acc: f64) -> Probe {
        Probe {
            cluster: 0,
            layer,
            head,
            theta: vec![1.0],
            val_accuracy: acc,
            train_loss_curve: vec![],
            degenerate: false,
            mean_diff: vec![0.0],
        }
    }

    #[test]
    fn ties_break_by_layer_then_head() {
        let probes = vec![probe(0, 0, 0.9), probe(0, 1, 0.7), probe(0, 2, 0.9)];
        let top = select_top_k_heads(&probes, 2).unwrap();
        let picked: Vec<(usize, usize)> = top.iter().map(|p| (p.layer, p.head)).collect();
        assert_eq!(picked, vec![(0, 0), (0, 2)]);
    }

    #[test]
    fn k_larger_than_head_count_returns_all_ordered() {
        let probes = vec![probe(1, 0, 0.6), probe(0, 0, 0.8), probe(0, 1, 0.7)];
        let top = select_top_k_heads(&probes, 24).unwrap();
        let picked: Vec<(usize, usize)> = top.iter().map(|p| (p.layer, p.head)).collect();
        assert_eq!(picked, vec![(0, 0), (0, 1), (1, 0)]);
    }

    #[test]
    fn degenerate_probes_are_excluded() {
        let mut bad = probe(0, 0, 1.0);
        bad.degenerate = true;
        let probes = vec![bad, probe(0, 1, 0.5)];
        let top = select_top_k_heads(&probes, 2).unwrap();
        assert_eq!(top.len(), 1);
        assert_eq!((top[0].layer, top[0].head), (0, 1));
    }

    #[test]
    fn zero_k_is_an_error() {
        assert!(select_top_k_heads(&[probe(0, 0, 1.0)], 0).is_err());
    }
}
