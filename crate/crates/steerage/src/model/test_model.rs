//! Shared model fixtures for unit tests.

use crate::model::archive::TensorArchive;
use crate::model::builder::random_archive;
use crate::model::transformer::{Model, ModelConfig};

pub(crate) fn random_archive_dims(
    n_layers: usize,
    n_heads: usize,
    head_dim: usize,
    vocab_size: usize,
    max_seq: usize,
    seed: u64,
) -> TensorArchive {
    random_archive(
        &ModelConfig {
            n_layers,
            n_heads,
            head_dim,
            vocab_size,
            max_seq,
        },
        seed,
    )
}

pub(crate) fn random_model(
    n_layers: usize,
    n_heads: usize,
    head_dim: usize,
    vocab_size: usize,
    max_seq: usize,
    seed: u64,
) -> Model {
    Model::from_archive(&random_archive_dims(
        n_layers, n_heads, head_dim, vocab_size, max_seq, seed,
    ))
    .expect("random archive is loadable")
}

/// 1 layer, 1 head, D = 2, V = 3: identity v/o projections, zero q/k and
/// MLP, fixed embeddings. Small enough to verify by hand.
pub(crate) fn hand_model() -> (Model, TensorArchive) {
    let config = ModelConfig {
        n_layers: 1,
        n_heads: 1,
        head_dim: 2,
        vocab_size: 3,
        max_seq: 4,
    };
    let dh = 2;
    let mut a = TensorArchive::new();
    a.insert_f32("config", vec![6], &config.to_tensor());
    a.insert_f32("tok_emb", vec![3, dh], &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    a.insert_f32(
        "pos_emb",
        vec![4, dh],
        &[0.5, -0.25, 0.1, 0.2, -0.3, 0.05, 0.0, 0.0],
    );
    a.insert_f32("layer0.attn.norm", vec![dh], &[1.0, 1.0]);
    a.insert_f32("layer0.attn.q_proj", vec![dh, dh], &[0.0; 4]);
    a.insert_f32("layer0.attn.k_proj", vec![dh, dh], &[0.0; 4]);
    a.insert_f32("layer0.attn.v_proj", vec![dh, dh], &[1.0, 0.0, 0.0, 1.0]);
    a.insert_f32("layer0.attn.o_proj", vec![dh, dh], &[1.0, 0.0, 0.0, 1.0]);
    a.insert_f32("layer0.mlp.norm", vec![dh], &[1.0, 1.0]);
    a.insert_f32("layer0.mlp.fc1", vec![4 * dh, dh], &[0.0; 16]);
    a.insert_f32("layer0.mlp.fc2", vec![dh, 4 * dh], &[0.0; 16]);
    a.insert_f32("final_norm", vec![dh], &[1.0, 1.0]);
    a.insert_f32("unembed", vec![3, dh], &[1.0, 0.0, 0.0, 1.0, -1.0, 2.0]);
    let model = Model::from_archive(&a).expect("hand archive is loadable");
    (model, a)
}
