//! Synthetic corpora with planted truth directions.
//!
//! The generator emits a dataset, a toy-model weight archive, a vocab file,
//! and the planted per-category directions, wired together so the model's
//! head activations for truthful vs untruthful answers separate along those
//! directions:
//!
//! - every head block reserves its first `n_categories` coordinates as the
//!   signal subspace; question/format tokens embed into the remaining
//!   clutter coordinates only,
//! - each answer is a single cue token whose embedding carries
//!   `±signal_strength` on its category's signal coordinate (plus seeded
//!   noise),
//! - q/k projections are zero (uniform causal attention), v/o projections
//!   are identity, and MLPs are zero, so last-token head activations are
//!   means of normalized embeddings and keep the planted sign exactly,
//! - unembedding rows of cue tokens lean `±unembed_gain` along the planted
//!   direction, so steering along it moves truthful tokens up.
//!
//! With `noise_scale = 0` the probing problem is separable through the
//! origin, which is what makes desk-scale verification of the full pipeline
//! possible.

use std::collections::BTreeMap;

use crate::corpus::dataset::QaRecord;
use crate::error::{Error, Result};
use crate::math::{l2_norm, DetRng};
use crate::model::{ModelConfig, TensorArchive, Tokenizer};

/// Which (layer, head) pairs carry the planted signal.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SignalHeads {
    All,
    Only(Vec<(usize, usize)>),
}

impl SignalHeads {
    pub fn contains(&self, layer: usize, head: usize) -> bool {
        match self {
            SignalHeads::All => true,
            SignalHeads::Only(list) => list.contains(&(layer, head)),
        }
    }

    /// Head indices (column blocks of the shared embedding) that carry
    /// signal at any layer.
    fn head_columns(&self, n_layers: usize, n_heads: usize) -> Vec<usize> {
        match self {
            SignalHeads::All => (0..n_heads).collect(),
            SignalHeads::Only(list) => {
                let mut heads: Vec<usize> = list
                    .iter()
                    .filter(|(l, _)| *l < n_layers)
                    .map(|(_, h)| *h)
                    .collect();
                heads.sort_unstable();
                heads.dedup();
                heads
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub n_questions: usize,
    pub n_truthful: usize,
    pub n_untruthful: usize,
    pub n_categories: usize,
    /// Noise on the signal coordinates of cue embeddings, relative to
    /// `signal_strength`.
    pub noise_scale: f64,
    pub n_layers: usize,
    pub n_heads: usize,
    pub head_dim: usize,
    pub max_seq: usize,
    pub signal_strength: f64,
    pub unembed_gain: f64,
    pub signal_heads: SignalHeads,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_questions: 16,
            n_truthful: 2,
            n_untruthful: 2,
            n_categories: 2,
            noise_scale: 0.0,
            n_layers: 2,
            n_heads: 4,
            head_dim: 8,
            max_seq: 64,
            signal_strength: 4.0,
            unembed_gain: 4.0,
            signal_heads: SignalHeads::All,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_questions", self.n_questions),
            ("n_truthful", self.n_truthful),
            ("n_untruthful", self.n_untruthful),
            ("n_categories", self.n_categories),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("head_dim", self.head_dim),
        ] {
            if v == 0 {
                return Err(Error::InvalidArg(format!(
                    "synthetic config: {name} must be >= 1"
                )));
            }
        }
        if self.n_categories >= self.head_dim {
            return Err(Error::InvalidArg(format!(
                "synthetic config: n_categories = {} needs head_dim > {} for clutter space",
                self.n_categories, self.n_categories
            )));
        }
        if self.n_questions < self.n_categories {
            return Err(Error::InvalidArg(
                "synthetic config: need at least one question per category".into(),
            ));
        }
        if self.noise_scale < 0.0 || !self.noise_scale.is_finite() {
            return Err(Error::InvalidArg(
                "synthetic config: bad noise_scale".into(),
            ));
        }
        if self
            .signal_heads
            .head_columns(self.n_layers, self.n_heads)
            .is_empty()
        {
            return Err(Error::InvalidArg(
                "synthetic config: signal_heads selects no heads".into(),
            ));
        }
        if let SignalHeads::Only(list) = &self.signal_heads {
            for &(l, h) in list {
                if l >= self.n_layers || h >= self.n_heads {
                    return Err(Error::InvalidArg(format!(
                        "synthetic config: signal head ({l},{h}) outside model"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Everything the generator hands back, ready to write or use in place.
pub struct SyntheticCorpus {
    pub records: Vec<QaRecord>,
    pub archive: TensorArchive,
    pub tokenizer: Tokenizer,
    pub model_config: ModelConfig,
    /// Category label -> planted direction in concatenated activation
    /// layout (layer-major, head-minor, `head_dim` coordinates per block),
    /// unit L2 norm.
    pub ground_truth: BTreeMap<String, Vec<f64>>,
}

pub fn category_label(c: usize) -> String {
    format!("cat{c}")
}

/// Build a synthetic corpus. Identical `(config, seed)` reproduce identical
/// records, weights, and vocab bytes.
pub fn make_synthetic(config: &SyntheticConfig, seed: u64) -> Result<SyntheticCorpus> {
    config.validate()?;
    let root = DetRng::new(seed);
    let d = config.head_dim;
    let h_count = config.n_heads;
    let dh = d * h_count;
    let n_sig = config.n_categories;

    // ── vocabulary ──────────────────────────────────────────────────────
    let mut tokens: Vec<String> = vec!["Q".into(), ":".into(), " ".into(), "A".into()];
    for i in 0..config.n_questions {
        tokens.push(format!("q{i}"));
    }
    // Cue tokens: one per (question, side, answer index).
    let mut cue_tokens: Vec<(usize, bool, usize, u32)> = Vec::new(); // (question, truthful, j, id)
    for i in 0..config.n_questions {
        for j in 0..config.n_truthful {
            cue_tokens.push((i, true, j, tokens.len() as u32));
            tokens.push(format!("ans{i}t{j}"));
        }
        for j in 0..config.n_untruthful {
            cue_tokens.push((i, false, j, tokens.len() as u32));
            tokens.push(format!("ans{i}f{j}"));
        }
    }
    let tokenizer = Tokenizer::new(tokens)?;
    let vocab_size = tokenizer.vocab_size();

    // ── records ─────────────────────────────────────────────────────────
    let mut records = Vec::with_capacity(config.n_questions);
    for i in 0..config.n_questions {
        let category = category_label(i % config.n_categories);
        let truthful: Vec<String> = (0..config.n_truthful)
            .map(|j| format!("ans{i}t{j}"))
            .collect();
        let untruthful: Vec<String> = (0..config.n_untruthful)
            .map(|j| format!("ans{i}f{j}"))
            .collect();
        records.push(QaRecord {
            question: format!("q{i}"),
            gold: Some(truthful[0].clone()),
            truthful_answers: truthful,
            untruthful_answers: untruthful,
            category,
        });
    }

    // ── embeddings ──────────────────────────────────────────────────────
    // Clutter tokens live in coordinates [n_sig, d) of every head block;
    // cue tokens add +-signal_strength on their category's signal
    // coordinate in the signal head blocks.
    let head_columns = config.signal_heads.head_columns(config.n_layers, h_count);
    let mut emb_rng = root.fork(1);
    let clutter_row = |rng: &mut DetRng| -> Vec<f64> {
        let mut row = vec![0.0; dh];
        for h in 0..h_count {
            for c in n_sig..d {
                row[h * d + c] = rng.normal();
            }
        }
        let norm = l2_norm(&row).max(1e-12);
        for v in &mut row {
            *v /= norm;
        }
        row
    };

    let mut tok_emb = vec![0.0; vocab_size * dh];
    for id in 0..vocab_size {
        let row = clutter_row(&mut emb_rng);
        tok_emb[id * dh..(id + 1) * dh].copy_from_slice(&row);
    }
    let mut noise_rng = root.fork(2);
    for &(question, truthful, _j, id) in &cue_tokens {
        let cat = question % config.n_categories;
        let sign = if truthful { 1.0 } else { -1.0 };
        let row = &mut tok_emb[id as usize * dh..(id as usize + 1) * dh];
        for &h in &head_columns {
            let noise = config.signal_strength * config.noise_scale * noise_rng.normal();
            row[h * d + cat] += sign * config.signal_strength + noise;
        }
    }

    // ── model weights ───────────────────────────────────────────────────
    let model_config = ModelConfig {
        n_layers: config.n_layers,
        n_heads: h_count,
        head_dim: d,
        vocab_size,
        max_seq: config.max_seq,
    };
    let mut archive = TensorArchive::new();
    archive.insert_f32("config", vec![6], &model_config.to_tensor());
    archive.insert_f32("tok_emb", vec![vocab_size, dh], &tok_emb);
    archive.insert_f32(
        "pos_emb",
        vec![config.max_seq, dh],
        &vec![0.0; config.max_seq * dh],
    );

    let identity = |n: usize| -> Vec<f64> {
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] = 1.0;
        }
        m
    };
    for l in 0..config.n_layers {
        archive.insert_f32(&format!("layer{l}.attn.norm"), vec![dh], &vec![1.0; dh]);
        archive.insert_f32(
            &format!("layer{l}.attn.q_proj"),
            vec![dh, dh],
            &vec![0.0; dh * dh],
        );
        archive.insert_f32(
            &format!("layer{l}.attn.k_proj"),
            vec![dh, dh],
            &vec![0.0; dh * dh],
        );
        // Identity value projection, with signal coordinates zeroed for
        // heads that do not carry signal at this layer.
        let mut v_proj = identity(dh);
        for h in 0..h_count {
            if !config.signal_heads.contains(l, h) {
                for c in 0..n_sig {
                    let row = h * d + c;
                    v_proj[row * dh + row] = 0.0;
                }
            }
        }
        archive.insert_f32(&format!("layer{l}.attn.v_proj"), vec![dh, dh], &v_proj);
        archive.insert_f32(
            &format!("layer{l}.attn.o_proj"),
            vec![dh, dh],
            &identity(dh),
        );
        archive.insert_f32(&format!("layer{l}.mlp.norm"), vec![dh], &vec![1.0; dh]);
        archive.insert_f32(
            &format!("layer{l}.mlp.fc1"),
            vec![4 * dh, dh],
            &vec![0.0; 4 * dh * dh],
        );
        archive.insert_f32(
            &format!("layer{l}.mlp.fc2"),
            vec![dh, 4 * dh],
            &vec![0.0; 4 * dh * dh],
        );
    }
    archive.insert_f32("final_norm", vec![dh], &vec![1.0; dh]);

    // Unembedding: random base rows; cue rows lean along the planted
    // direction of their category.
    let mut unembed_rng = root.fork(3);
    let mut unembed = vec![0.0; vocab_size * dh];
    let scale = 1.0 / (dh as f64).sqrt();
    for v in &mut unembed {
        *v = scale * unembed_rng.normal();
    }
    let emb_dir_norm = (head_columns.len() as f64).sqrt();
    for &(question, truthful, _j, id) in &cue_tokens {
        let cat = question % config.n_categories;
        let sign = if truthful { 1.0 } else { -1.0 };
        let row = &mut unembed[id as usize * dh..(id as usize + 1) * dh];
        for &h in &head_columns {
            row[h * d + cat] += sign * config.unembed_gain / emb_dir_norm;
        }
    }
    archive.insert_f32("unembed", vec![vocab_size, dh], &unembed);

    // ── ground truth ────────────────────────────────────────────────────
    // Concatenated (layer-major, head-minor) planted direction per
    // category, unit norm.
    let mut ground_truth = BTreeMap::new();
    for cat in 0..config.n_categories {
        let mut dir = vec![0.0; config.n_layers * h_count * d];
        for l in 0..config.n_layers {
            for h in 0..h_count {
                if config.signal_heads.contains(l, h) {
                    dir[(l * h_count + h) * d + cat] = 1.0;
                }
            }
        }
        let norm = l2_norm(&dir);
        for v in &mut dir {
            *v /= norm;
        }
        ground_truth.insert(category_label(cat), dir);
    }

    Ok(SyntheticCorpus {
        records,
        archive,
        tokenizer,
        model_config,
        ground_truth,
    })
}
