//! Bias-free logistic probes trained by full-batch gradient descent.
//!
//! A probe scores an activation as `sigmoid(<theta, a>)`. No bias term: the
//! decision boundary passes through the origin, and `theta` doubles as the
//! steering direction later.

use crate::corpus::{split_indices, SplitSpec};
use crate::error::{Error, Result};
use crate::math::{dot, sigmoid};

/// Optimizer settings. Logistic loss is convex, so the defaults reach the
/// optimum for any reasonable data; they are knobs, not tuning surface.
#[derive(Debug, Clone, Copy)]
pub struct ProbeTrainConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    pub l2_penalty: f64,
    /// Stop when the loss improves by less than this between iterations.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for ProbeTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            max_iters: 2000,
            l2_penalty: 1e-3,
            tolerance: 1e-8,
            seed: 0,
        }
    }
}

impl ProbeTrainConfig {
    fn validate(&self) -> Result<()> {
        let lr_ok = self.learning_rate > 0.0 && self.learning_rate.is_finite();
        if !lr_ok || self.max_iters == 0 || self.l2_penalty < 0.0 {
            return Err(Error::InvalidArg(
                "probe training config: learning_rate > 0, max_iters >= 1, l2 >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// A trained probe for one (cluster, layer, head).
#[derive(Debug, Clone)]
pub struct Probe {
    pub cluster: usize,
    pub layer: usize,
    pub head: usize,
    pub theta: Vec<f64>,
    /// Accuracy on the held-out validation side of the split.
    pub val_accuracy: f64,
    pub train_loss_curve: Vec<f64>,
    /// Set when the training side held a single class; such probes are
    /// excluded from head selection.
    pub degenerate: bool,
    /// Truthful-mean minus untruthful-mean of the training activations,
    /// the alternative steering vector.
    pub mean_diff: Vec<f64>,
}

impl Probe {
    pub fn at(mut self, cluster: usize, layer: usize, head: usize) -> Self {
        self.cluster = cluster;
        self.layer = layer;
        self.head = head;
        self
    }

    /// Probability the activation is truthful.
    pub fn score(&self, activation: &[f64]) -> f64 {
        sigmoid(dot(&self.theta, activation))
    }
}

/// Mean logistic loss plus `l2/2 * |theta|^2`, and its gradient.
///
/// Loss per sample uses the stable softplus form `ln(1 + e^-m)` with
/// `m = (2y - 1) <theta, x>`.
pub fn loss_and_grad(
    theta: &[f64],
    samples: &[Vec<f64>],
    labels: &[u8],
    l2_penalty: f64,
) -> (f64, Vec<f64>) {
    debug_assert_eq!(samples.len(), labels.len());
    let n = samples.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; theta.len()];
    for (x, &y) in samples.iter().zip(labels.iter()) {
        let z = dot(theta, x);
        let margin = if y == 1 { z } else { -z };
        loss += softplus(-margin);
        let err = sigmoid(z) - f64::from(y);
        for (g, &xi) in grad.iter_mut().zip(x.iter()) {
            *g += err * xi;
        }
    }
    loss /= n;
    for (g, &t) in grad.iter_mut().zip(theta.iter()) {
        *g = *g / n + l2_penalty * t;
    }
    loss += 0.5 * l2_penalty * dot(theta, theta);
    (loss, grad)
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Fit a probe on a seeded train/validation split of the samples.
///
/// `group_of` maps sample index -> question id for stratified splits; pass
/// the identity when stratification is off.
pub fn train_probe(
    samples: &[Vec<f64>],
    labels: &[u8],
    split: &SplitSpec,
    cfg: &ProbeTrainConfig,
    group_of: impl Fn(usize) -> usize,
) -> Result<Probe> {
    if samples.is_empty() {
        return Err(Error::Degenerate("probe dataset is empty".into()));
    }
    if samples.len() != labels.len() {
        return Err(Error::DimMismatch("samples/labels length mismatch".into()));
    }
    let (train_idx, val_idx) = split_indices(samples.len(), split, group_of)?;
    let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<u8>) {
        (
            idx.iter().map(|&i| samples[i].clone()).collect(),
            idx.iter().map(|&i| labels[i]).collect(),
        )
    };
    let (train_x, train_y) = pick(&train_idx);
    let (val_x, val_y) = pick(&val_idx);
    train_probe_presplit(&train_x, &train_y, &val_x, &val_y, cfg)
}

/// Fit a probe on an already-split dataset. An empty validation side or a
/// single-class training side yields a degenerate probe (trained anyway,
/// but excluded from head selection).
pub fn train_probe_presplit(
    train_x: &[Vec<f64>],
    train_y: &[u8],
    val_x: &[Vec<f64>],
    val_y: &[u8],
    cfg: &ProbeTrainConfig,
) -> Result<Probe> {
    cfg.validate()?;
    if train_x.is_empty() {
        return Err(Error::Degenerate("probe training set is empty".into()));
    }
    let dim = train_x[0].len();
    if train_x.iter().chain(val_x.iter()).any(|s| s.len() != dim) {
        return Err(Error::DimMismatch("ragged probe dataset".into()));
    }
    let n_pos = train_y.iter().filter(|&&y| y == 1).count();
    let mut degenerate = n_pos == 0 || n_pos == train_y.len();

    let mut theta = vec![0.0; dim];
    let mut curve = Vec::new();
    let mut prev_loss = f64::INFINITY;
    for _ in 0..cfg.max_iters {
        let (loss, grad) = loss_and_grad(&theta, train_x, train_y, cfg.l2_penalty);
        curve.push(loss);
        for (t, g) in theta.iter_mut().zip(grad.iter()) {
            *t -= cfg.learning_rate * g;
        }
        if (prev_loss - loss).abs() < cfg.tolerance {
            break;
        }
        prev_loss = loss;
    }

    let val_accuracy = if val_x.is_empty() {
        degenerate = true;
        0.0
    } else {
        let correct = val_x
            .iter()
            .zip(val_y.iter())
            .filter(|(x, &y)| {
                let predicted = if dot(&theta, x) >= 0.0 { 1 } else { 0 };
                predicted == y
            })
            .count();
        correct as f64 / val_x.len() as f64
    };

    // Class-mean difference over the training side, for mass-mean steering.
    let mut mean_diff = vec![0.0; dim];
    if n_pos > 0 && n_pos < train_y.len() {
        let mut pos = vec![0.0; dim];
        let mut neg = vec![0.0; dim];
        for (x, &y) in train_x.iter().zip(train_y.iter()) {
            let acc = if y == 1 { &mut pos } else { &mut neg };
            for (a, &v) in acc.iter_mut().zip(x.iter()) {
                *a += v;
            }
        }
        let n_neg = train_y.len() - n_pos;
        for i in 0..dim {
            mean_diff[i] = pos[i] / n_pos as f64 - neg[i] / n_neg as f64;
        }
    }

    Ok(Probe {
        cluster: 0,
        layer: 0,
        head: 0,
        theta,
        val_accuracy,
        train_loss_curve: curve,
        degenerate,
        mean_diff,
    })
}
