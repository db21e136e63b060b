//! Deterministic numeric kernel shared by every stochastic step of the
//! pipeline: dense vectors/matrices, stable elementwise functions,
//! distribution metrics, PCA, and a seedable RNG.
//!
//! Everything here is 64-bit floats on immutable inputs; all functions are
//! pure and safe to call from many threads.

mod linalg;
mod pca;
mod rng;

pub use linalg::{add_scaled, dot, l2_norm, Matrix};
pub use pca::pca_project;
pub use rng::DetRng;

use crate::error::{Error, Result};

/// Numerically stable logistic function, `1 / (1 + e^-x)`.
///
/// Saturates smoothly at the extremes; never overflows for finite input and
/// stays strictly inside `(0, 1)` — the exact endpoints are clamped away
/// even where `exp` underflows.
pub fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Softmax with temperature, computed with max-subtraction.
///
/// Entries come back positive and summing to 1 (within 1e-9). Temperature
/// must be strictly positive.
pub fn softmax(values: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::InvalidArg("softmax of empty vector".into()));
    }
    if temperature <= 0.0 || temperature.is_nan() {
        return Err(Error::InvalidArg(format!(
            "softmax temperature must be positive, got {temperature}"
        )));
    }
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = values
        .iter()
        .map(|&v| ((v - max) / temperature).exp())
        .collect();
    let sum: f64 = out.iter().sum();
    for o in &mut out {
        *o /= sum;
    }
    Ok(out)
}

/// Log-softmax at temperature 1 (`logits[i] - logsumexp(logits)`).
///
/// Shares the max-subtraction trick with [`softmax`] so the two agree to
/// machine precision.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&v| v - lse).collect()
}

/// Log-sum-exp of a slice, stable for inputs down to -1e4 and beyond.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Kullback-Leibler divergence `Σ p ln(p/q)` in nats, with `0 ln(0/q) := 0`.
///
/// Both arguments must be distributions over the same support; a positive
/// `p[i]` paired with a zero `q[i]` is a support violation.
pub fn kl_div(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimMismatch(format!(
            "kl_div lengths {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let mut sum = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q.iter()).enumerate() {
        if pi < 0.0 || qi < 0.0 {
            return Err(Error::InvalidDistribution(format!(
                "negative mass at index {i}"
            )));
        }
        if pi > 0.0 {
            if qi == 0.0 {
                return Err(Error::SupportViolation(i));
            }
            sum += pi * (pi / qi).ln();
        }
    }
    // Tiny negatives from cancellation round up to the Gibbs bound.
    Ok(sum.max(0.0))
}

/// Cross entropy of the target class under `softmax(logits)`, in nats.
///
/// Computed as `logsumexp(logits) - logits[target]` so it never underflows.
pub fn cross_entropy(logits: &[f64], target: usize) -> Result<f64> {
    if target >= logits.len() {
        return Err(Error::IndexOutOfRange {
            index: target,
            len: logits.len(),
        });
    }
    Ok(log_sum_exp(logits) - logits[target])
}

/// FNV-1a 64-bit hash, used for provenance fingerprints in output files.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
