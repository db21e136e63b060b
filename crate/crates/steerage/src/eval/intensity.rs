//! Intervention-intensity metrics: how far steering moves the model from
//! its original generation distribution.

use crate::error::{Error, Result};
use crate::math::{cross_entropy, kl_div, softmax};
use crate::model::{Model, Tokenizer};
use crate::steering::{steered_forward, SteeringContext};

/// Mean next-token cross entropy of the (possibly steered) model on the
/// evaluation texts, and mean KL from the baseline distribution to the
/// steered one. Lower values mean less change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityMetrics {
    pub ce: f64,
    pub kl: f64,
    /// Number of predicted positions the means run over.
    pub positions: usize,
}

pub fn intensity_metrics(
    model: &Model,
    tokenizer: &Tokenizer,
    texts: &[String],
    mut ctx: Option<&mut SteeringContext>,
) -> Result<IntensityMetrics> {
    if texts.is_empty() {
        return Err(Error::Data("no evaluation texts".into()));
    }
    let mut ce_sum = 0.0;
    let mut kl_sum = 0.0;
    let mut positions = 0usize;

    for text in texts {
        let ids = tokenizer.tokenize(text);
        if ids.is_empty() {
            return Err(Error::Data(format!("text tokenizes to nothing: {text:?}")));
        }
        if ids.len() < 2 {
            continue; // nothing to predict
        }
        let baseline = model.forward(&ids)?;
        let steered = match ctx.as_deref_mut() {
            Some(ctx) => Some(steered_forward(model, &ids, ctx)?),
            None => None,
        };
        let steered_logits = steered
            .as_ref()
            .map(|t| &t.logits)
            .unwrap_or(&baseline.logits);

        for t in 0..ids.len() - 1 {
            let target = ids[t + 1] as usize;
            ce_sum += cross_entropy(steered_logits.row(t), target)?;
            // The baseline run compares its distribution to itself, which
            // is identically zero; steering shares the same code path.
            let p = softmax(baseline.logits.row(t), 1.0)?;
            let q = softmax(steered_logits.row(t), 1.0)?;
            kl_sum += kl_div(&p, &q)?;
            positions += 1;
        }
    }
    if positions == 0 {
        return Err(Error::Data(
            "evaluation texts have no predicted positions".into(),
        ));
    }
    Ok(IntensityMetrics {
        ce: ce_sum / positions as f64,
        kl: kl_sum / positions as f64,
        positions,
    })
}
