//! Pipeline driver: configuration resolution, the activation cache, and
//! the subcommand implementations behind the CLI.

mod cache;
mod commands;
mod config;

pub use cache::{cache_from_bytes, load_cache, save_cache, CacheMeta, CACHE_FORMAT, CACHE_VERSION};
pub use commands::{
    cmd_eval, cmd_eval_two_fold, cmd_extract, cmd_generate, cmd_report, cmd_synth, cmd_train,
    files, reps_from_probing_data, EvalOutput, GenerateOutput, RunReport, TwoFoldReport,
    TwoFoldSummary,
};
pub use config::{
    CaptureKind, FileConfig, Mode, NormalizationKind, Overrides, RunConfig, SynthSection,
    VectorModeKind,
};
