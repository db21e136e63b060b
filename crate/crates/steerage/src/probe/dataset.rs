//! Probing datasets: labeled head activations for every (layer, head).
//!
//! One forward pass per pair captures all heads at once; per-head training
//! sets are views into the shared samples.

use crate::corpus::QaPair;
use crate::error::{Error, Result};
use crate::model::{Model, Tokenizer};
use crate::probe::direction::{pair_activations, CaptureMode};

/// One captured position of one pair: the concatenated activations of all
/// heads plus the pair's label.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbingSample {
    pub pair_index: usize,
    pub question_id: usize,
    pub position: usize,
    pub label: u8,
    /// Layer-major, head-minor concatenation, length `L * H * D`.
    pub concat: Vec<f64>,
}

/// All probing samples of a corpus, with the model geometry needed to slice
/// out per-head views.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbingData {
    pub n_layers: usize,
    pub n_heads: usize,
    pub head_dim: usize,
    pub samples: Vec<ProbingSample>,
}

impl ProbingData {
    pub fn concat_dim(&self) -> usize {
        self.n_layers * self.n_heads * self.head_dim
    }

    /// Per-head activations and labels for the given sample indices,
    /// in index order.
    pub fn head_slice(
        &self,
        layer: usize,
        head: usize,
        indices: &[usize],
    ) -> (Vec<Vec<f64>>, Vec<u8>) {
        let start = (layer * self.n_heads + head) * self.head_dim;
        let mut xs = Vec::with_capacity(indices.len());
        let mut ys = Vec::with_capacity(indices.len());
        for &i in indices {
            let s = &self.samples[i];
            xs.push(s.concat[start..start + self.head_dim].to_vec());
            ys.push(s.label);
        }
        (xs, ys)
    }

    /// Indices of samples whose question belongs to the given set.
    pub fn indices_for_questions(&self, wanted: impl Fn(usize) -> bool) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| wanted(s.question_id))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Capture labeled activations for every pair at the mode's positions.
/// Samples appear in (pair, position) order, so the output is deterministic.
pub fn build_probing_dataset(
    model: &Model,
    tokenizer: &Tokenizer,
    pairs: &[QaPair],
    mode: CaptureMode,
) -> Result<ProbingData> {
    if pairs.is_empty() {
        return Err(Error::Degenerate("no pairs to probe".into()));
    }
    let config = model.config();
    let mut samples = Vec::new();
    for (pair_index, pair) in pairs.iter().enumerate() {
        let acts = pair_activations(model, tokenizer, &pair.question, &pair.answer, mode)?;
        let mut positions: Vec<usize> = acts.iter().map(|((_, _, p), _)| *p).collect();
        positions.sort_unstable();
        positions.dedup();
        for pos in positions {
            let mut concat = Vec::with_capacity(config.n_layers * config.n_heads * config.head_dim);
            for l in 0..config.n_layers {
                for h in 0..config.n_heads {
                    concat.extend_from_slice(acts.get(l, h, pos).expect("captured"));
                }
            }
            samples.push(ProbingSample {
                pair_index,
                question_id: pair.question_id,
                position: pos,
                label: pair.label,
                concat,
            });
        }
    }
    Ok(ProbingData {
        n_layers: config.n_layers,
        n_heads: config.n_heads,
        head_dim: config.head_dim,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{flatten_qa_pairs, make_synthetic, SyntheticConfig};

    #[test]
    fn last_token_mode_yields_one_sample_per_pair() {
        let corpus = make_synthetic(&SyntheticConfig::default(), 13).unwrap();
        let model = Model::from_archive(&corpus.archive).unwrap();
        let pairs = flatten_qa_pairs(&corpus.records[..3]);
        let data = build_probing_dataset(&model, &corpus.tokenizer, &pairs, CaptureMode::LastToken)
            .unwrap();
        assert_eq!(data.samples.len(), pairs.len());
        let labels: Vec<u8> = data.samples.iter().map(|s| s.label).collect();
        let expected: Vec<u8> = pairs.iter().map(|p| p.label).collect();
        assert_eq!(labels, expected);

        // Every head dataset has the same row count.
        let all: Vec<usize> = (0..data.samples.len()).collect();
        for l in 0..data.n_layers {
            for h in 0..data.n_heads {
                let (xs, ys) = data.head_slice(l, h, &all);
                assert_eq!(xs.len(), pairs.len());
                assert_eq!(ys, expected);
                assert!(xs.iter().all(|x| x.len() == data.head_dim));
            }
        }
    }

    #[test]
    fn question_filter_selects_matching_samples() {
        let corpus = make_synthetic(&SyntheticConfig::default(), 13).unwrap();
        let model = Model::from_archive(&corpus.archive).unwrap();
        let pairs = flatten_qa_pairs(&corpus.records);
        let data = build_probing_dataset(&model, &corpus.tokenizer, &pairs, CaptureMode::LastToken)
            .unwrap();
        let subset = data.indices_for_questions(|q| q < 2);
        let per_question =
            corpus.records[0].truthful_answers.len() + corpus.records[0].untruthful_answers.len();
        assert_eq!(subset.len(), 2 * per_question);
        assert!(subset.iter().all(|&i| data.samples[i].question_id < 2));
    }
}
