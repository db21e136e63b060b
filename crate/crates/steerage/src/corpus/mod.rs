//! TruthfulQA-schema datasets: loading, formatting, splits, and synthetic
//! corpora with planted truth directions for desk-scale verification.

mod dataset;
mod format;
mod split;
mod synthetic;

pub use dataset::{
    categories, flatten_qa_pairs, load_dataset, parse_dataset, save_dataset, QaPair, QaRecord,
};
pub use format::{answer_continuation, format_qa, primer_prompt, question_prompt};
pub use split::{split_indices, upsample_with_replacement, SplitSpec};
pub use synthetic::{
    category_label, make_synthetic, SignalHeads, SyntheticConfig, SyntheticCorpus,
};
