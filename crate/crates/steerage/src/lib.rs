//! Probe-gated activation steering for decoder-only transformers.
//!
//! The crate trains per-head truthfulness probes on contrastive QA
//! activations, clusters per-question steering directions, and applies the
//! resulting steering vectors at inference with a probe-gated intensity.
//! Everything runs at desk scale: a built-in toy transformer, a custom
//! tensor-archive format, synthetic corpora with planted directions, and a
//! multiple-choice evaluation harness.
//!
//! Module map:
//! - [`math`] — dense linear algebra, distribution metrics, PCA, seeded RNG
//! - [`model`] — toy decoder-only transformer, tensor archive, tokenizer
//! - [`corpus`] — QA dataset loading, formatting, splits, synthetic corpora
//! - [`probe`] — directional representations, K-means, logistic probes,
//!   steering-policy assembly
//! - [`steering`] — gated steering at the per-head hook point
//! - [`eval`] — MC1/MC2, intervention-intensity metrics, cluster projection
//! - [`pipeline`] — config resolution and the CLI subcommand implementations

pub mod corpus;
pub mod error;
pub mod eval;
pub mod math;
pub mod model;
pub mod pipeline;
pub mod probe;
pub mod steering;

pub use error::{Error, Result};
