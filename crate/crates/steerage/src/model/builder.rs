//! Programmatic archive construction for toy models.

use crate::math::DetRng;
use crate::model::archive::TensorArchive;
use crate::model::transformer::ModelConfig;

/// Build a complete weight archive with small random weights, suitable for
/// shape, causality, and timing checks. Deterministic in `seed`.
pub fn random_archive(config: &ModelConfig, seed: u64) -> TensorArchive {
    let mut rng = DetRng::new(seed);
    let dh = config.hidden();
    let mut archive = TensorArchive::new();
    archive.insert_f32("config", vec![6], &config.to_tensor());

    let fill = |rng: &mut DetRng, n: usize, scale: f64| -> Vec<f64> {
        (0..n).map(|_| scale * rng.normal()).collect()
    };

    archive.insert_f32(
        "tok_emb",
        vec![config.vocab_size, dh],
        &fill(&mut rng, config.vocab_size * dh, 0.5),
    );
    archive.insert_f32(
        "pos_emb",
        vec![config.max_seq, dh],
        &fill(&mut rng, config.max_seq * dh, 0.1),
    );
    // Near-orthonormal-ish scaling keeps activations bounded over layers.
    let proj_scale = 1.0 / (dh as f64).sqrt();
    for l in 0..config.n_layers {
        archive.insert_f32(&format!("layer{l}.attn.norm"), vec![dh], &vec![1.0; dh]);
        for proj in ["q_proj", "k_proj", "v_proj", "o_proj"] {
            archive.insert_f32(
                &format!("layer{l}.attn.{proj}"),
                vec![dh, dh],
                &fill(&mut rng, dh * dh, proj_scale),
            );
        }
        archive.insert_f32(&format!("layer{l}.mlp.norm"), vec![dh], &vec![1.0; dh]);
        archive.insert_f32(
            &format!("layer{l}.mlp.fc1"),
            vec![4 * dh, dh],
            &fill(&mut rng, 4 * dh * dh, proj_scale),
        );
        archive.insert_f32(
            &format!("layer{l}.mlp.fc2"),
            vec![dh, 4 * dh],
            &fill(&mut rng, 4 * dh * dh, 0.5 * proj_scale),
        );
    }
    archive.insert_f32("final_norm", vec![dh], &vec![1.0; dh]);
    archive.insert_f32(
        "unembed",
        vec![config.vocab_size, dh],
        &fill(&mut rng, config.vocab_size * dh, 0.5),
    );
    archive
}
