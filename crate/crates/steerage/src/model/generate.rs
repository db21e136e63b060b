//! Greedy decoding.

use std::collections::BTreeSet;

use crate::error::Result;
use crate::model::transformer::{ForwardOptions, HeadHook, Model};

/// Append argmax next tokens until a stop id, `max_new` tokens, or the model
/// context limit. Ties break to the lowest token id. The stop token, when
/// hit, is included in the returned ids.
///
/// A `hook` routes every forward step through the per-head intervention
/// point, which is how steering reaches generation.
pub fn generate_greedy(
    model: &Model,
    prompt_ids: &[u32],
    max_new: usize,
    stop_ids: &BTreeSet<u32>,
    mut hook: Option<&mut dyn HeadHook>,
) -> Result<Vec<u32>> {
    let mut ids = prompt_ids.to_vec();
    let opts = ForwardOptions::default();
    for _ in 0..max_new {
        if ids.len() >= model.config().max_seq {
            break;
        }
        let trace = match hook {
            Some(ref mut h) => model.forward_with(&ids, &opts, Some(&mut **h))?,
            None => model.forward_with(&ids, &opts, None)?,
        };
        let last = trace.logits.row(trace.logits.rows() - 1);
        let next = argmax_lowest(last) as u32;
        ids.push(next);
        if stop_ids.contains(&next) {
            break;
        }
    }
    Ok(ids)
}

/// Index of the maximum value; ties resolve to the lowest index.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
