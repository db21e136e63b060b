//! Toy decoder-only transformer runtime: weight archives, tokenizer,
//! forward pass with per-head capture/intervention, greedy decoding.

pub mod archive;
mod builder;
mod generate;
mod tokenizer;
mod transformer;

#[cfg(test)]
pub(crate) mod test_model;

pub use archive::{
    read_container, read_container_bytes, split_container, write_atomic, write_container, Dtype,
    TensorArchive, TensorEntry,
};
pub use builder::random_archive;
pub use generate::{argmax_lowest, generate_greedy};
pub use tokenizer::{Tokenizer, BYTE_FALLBACK_COUNT};
pub use transformer::{
    Capture, ForwardOptions, ForwardTrace, HeadActivationSet, HeadHook, Model, ModelConfig,
};
