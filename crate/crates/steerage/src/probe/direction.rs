//! Per-question directional representations: the contrast between mean
//! truthful and mean untruthful head activations at the capture positions.

use crate::corpus::{format_qa, QaRecord};
use crate::error::{Error, Result};
use crate::math::l2_norm;
use crate::model::{Capture, ForwardOptions, HeadActivationSet, Model, Tokenizer};

/// Which answer positions contribute activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaptureMode {
    /// Final token of the formatted text only.
    LastToken,
    /// The final `ceil(0.1 * answer_token_count)` positions (at least one),
    /// used in the few-shot setting where single-token capture starves the
    /// probes of data.
    LastTenPercent,
}

/// Capture positions inside a `text_len`-token sequence whose answer spans
/// `answer_len` tokens.
pub fn capture_positions(mode: CaptureMode, answer_len: usize, text_len: usize) -> Vec<usize> {
    debug_assert!(text_len >= 1);
    match mode {
        CaptureMode::LastToken => vec![text_len - 1],
        CaptureMode::LastTenPercent => {
            let k = ((answer_len as f64) * 0.1).ceil().max(1.0) as usize;
            let k = k.min(text_len);
            (text_len - k..text_len).collect()
        }
    }
}

/// Head activations of one formatted (question, answer) pair at the mode's
/// capture positions.
pub fn pair_activations(
    model: &Model,
    tokenizer: &Tokenizer,
    question: &str,
    answer: &str,
    mode: CaptureMode,
) -> Result<HeadActivationSet> {
    let text = format_qa(question, answer);
    let ids = tokenizer.tokenize(&text);
    if ids.is_empty() {
        return Err(Error::EmptySequence);
    }
    let answer_len = tokenizer.tokenize(answer).len().max(1);
    let positions = capture_positions(mode, answer_len, ids.len());
    let trace = model.forward_with(
        &ids,
        &ForwardOptions {
            capture: Capture::Positions(positions),
            record_attn_residuals: false,
        },
        None,
    )?;
    Ok(trace.activations.expect("capture requested"))
}

/// Steering direction of one question: per-(layer, head) difference of mean
/// truthful and mean untruthful activations, stored as one concatenated
/// vector in fixed (layer-major, head-minor) order.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalRep {
    pub question_id: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub head_dim: usize,
    concat: Vec<f64>,
}

impl DirectionalRep {
    pub fn from_concat(
        question_id: usize,
        n_layers: usize,
        n_heads: usize,
        head_dim: usize,
        concat: Vec<f64>,
    ) -> Result<Self> {
        if concat.len() != n_layers * n_heads * head_dim {
            return Err(Error::DimMismatch(format!(
                "directional rep length {} != {}*{}*{}",
                concat.len(),
                n_layers,
                n_heads,
                head_dim
            )));
        }
        if !concat.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("non-finite directional rep".into()));
        }
        Ok(Self {
            question_id,
            n_layers,
            n_heads,
            head_dim,
            concat,
        })
    }

    /// The full concatenated direction.
    pub fn concat(&self) -> &[f64] {
        &self.concat
    }

    /// Slice for one (layer, head); by construction the concatenation of
    /// these slices in (layer, head) order is exactly [`Self::concat`].
    pub fn per_head(&self, layer: usize, head: usize) -> &[f64] {
        let start = (layer * self.n_heads + head) * self.head_dim;
        &self.concat[start..start + self.head_dim]
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.concat)
    }
}

/// Mean of captured activations per (layer, head) over a set of answers,
/// flattened into concat layout.
fn mean_activations(
    model: &Model,
    tokenizer: &Tokenizer,
    question: &str,
    answers: &[String],
    mode: CaptureMode,
) -> Result<Vec<f64>> {
    let config = model.config();
    let dim = config.n_layers * config.n_heads * config.head_dim;
    let mut sum = vec![0.0; dim];
    let mut count = 0usize;
    for answer in answers {
        let acts = pair_activations(model, tokenizer, question, answer, mode)?;
        // Group by position: each captured position contributes one sample.
        let mut positions: Vec<usize> = acts.iter().map(|((_, _, p), _)| *p).collect();
        positions.sort_unstable();
        positions.dedup();
        for pos in positions {
            for l in 0..config.n_layers {
                for h in 0..config.n_heads {
                    let a = acts.get(l, h, pos).expect("captured position present");
                    let start = (l * config.n_heads + h) * config.head_dim;
                    for (i, &v) in a.iter().enumerate() {
                        sum[start + i] += v;
                    }
                }
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Degenerate("no activations captured".into()));
    }
    for v in &mut sum {
        *v /= count as f64;
    }
    Ok(sum)
}

/// Directional representation of one record: truthful mean minus
/// untruthful mean. Exactly antisymmetric under swapping the answer lists.
pub fn directional_representation(
    model: &Model,
    tokenizer: &Tokenizer,
    record: &QaRecord,
    question_id: usize,
    mode: CaptureMode,
) -> Result<DirectionalRep> {
    if record.truthful_answers.is_empty() || record.untruthful_answers.is_empty() {
        return Err(Error::Record {
            index: question_id,
            reason: "needs at least one answer on each side".into(),
        });
    }
    let config = model.config();
    let pos = mean_activations(
        model,
        tokenizer,
        &record.question,
        &record.truthful_answers,
        mode,
    )?;
    let neg = mean_activations(
        model,
        tokenizer,
        &record.question,
        &record.untruthful_answers,
        mode,
    )?;
    let concat: Vec<f64> = pos.iter().zip(neg.iter()).map(|(p, n)| p - n).collect();
    DirectionalRep::from_concat(
        question_id,
        config.n_layers,
        config.n_heads,
        config.head_dim,
        concat,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_model::hand_model;

    #[test]
    fn capture_position_rules() {
        assert_eq!(capture_positions(CaptureMode::LastToken, 25, 40), vec![39]);
        // ceil(2.5) = 3 positions.
        assert_eq!(
            capture_positions(CaptureMode::LastTenPercent, 25, 40),
            vec![37, 38, 39]
        );
        // ceil(2.0) = 2 positions.
        assert_eq!(
            capture_positions(CaptureMode::LastTenPercent, 20, 40),
            vec![38, 39]
        );
        // Minimum one position.
        assert_eq!(
            capture_positions(CaptureMode::LastTenPercent, 3, 10),
            vec![9]
        );
    }

    #[test]
    fn identical_answer_lists_give_zero_direction() {
        let corpus =
            crate::corpus::make_synthetic(&crate::corpus::SyntheticConfig::default(), 3).unwrap();
        let model = Model::from_archive(&corpus.archive).unwrap();
        let mut record = corpus.records[0].clone();
        record.untruthful_answers = record.truthful_answers.clone();
        let rep = directional_representation(
            &model,
            &corpus.tokenizer,
            &record,
            0,
            CaptureMode::LastToken,
        )
        .unwrap();
        assert!(rep.concat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn swapping_answer_lists_negates_direction_exactly() {
        let corpus =
            crate::corpus::make_synthetic(&crate::corpus::SyntheticConfig::default(), 3).unwrap();
        let model = Model::from_archive(&corpus.archive).unwrap();
        let record = &corpus.records[1];
        let mut swapped = record.clone();
        std::mem::swap(
            &mut swapped.truthful_answers,
            &mut swapped.untruthful_answers,
        );

        let a = directional_representation(
            &model,
            &corpus.tokenizer,
            record,
            1,
            CaptureMode::LastToken,
        )
        .unwrap();
        let b = directional_representation(
            &model,
            &corpus.tokenizer,
            &swapped,
            1,
            CaptureMode::LastToken,
        )
        .unwrap();
        for (x, y) in a.concat().iter().zip(b.concat().iter()) {
            assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn single_pair_direction_matches_two_forward_hand_oracle() {
        // One truthful and one untruthful answer: the direction must equal
        // the difference of the two capture passes run by hand.
        let corpus =
            crate::corpus::make_synthetic(&crate::corpus::SyntheticConfig::default(), 7).unwrap();
        let model = Model::from_archive(&corpus.archive).unwrap();
        let mut record = corpus.records[2].clone();
        record.truthful_answers.truncate(1);
        record.untruthful_answers.truncate(1);

        let rep = directional_representation(
            &model,
            &corpus.tokenizer,
            &record,
            2,
            CaptureMode::LastToken,
        )
        .unwrap();

        let capture = |answer: &str| {
            let ids = corpus
                .tokenizer
                .tokenize(&format_qa(&record.question, answer));
            model.capture_last_token(&ids).unwrap()
        };
        let pos = capture(&record.truthful_answers[0]);
        let neg = capture(&record.untruthful_answers[0]);
        let config = model.config();
        for l in 0..config.n_layers {
            for h in 0..config.n_heads {
                let slice = rep.per_head(l, h);
                let last = |acts: &HeadActivationSet| {
                    let pos_idx = acts.iter().map(|((_, _, p), _)| *p).max().unwrap();
                    acts.get(l, h, pos_idx).unwrap().to_vec()
                };
                let p = last(&pos);
                let n = last(&neg);
                for i in 0..config.head_dim {
                    assert!((slice[i] - (p[i] - n[i])).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn concat_is_ordered_concatenation_of_per_head_slices() {
        let rep =
            DirectionalRep::from_concat(0, 2, 3, 4, (0..24).map(f64::from).collect()).unwrap();
        let mut rebuilt = Vec::new();
        for l in 0..2 {
            for h in 0..3 {
                rebuilt.extend_from_slice(rep.per_head(l, h));
            }
        }
        assert_eq!(rebuilt, rep.concat());
    }

    #[test]
    fn hand_model_is_loadable() {
        // Keeps the hand fixture exercised from this module too.
        let (model, _) = hand_model();
        assert_eq!(model.config().hidden(), 2);
    }
}
