//! Command-line driver: synth, extract, train, eval, generate, report.
//!
//! Exit codes: 0 ok, 1 usage, 2 data/format error, 3 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use steerage::pipeline::{
    cmd_eval, cmd_eval_two_fold, cmd_extract, cmd_generate, cmd_report, cmd_synth, cmd_train,
    CaptureKind, FileConfig, Mode, NormalizationKind, Overrides, RunConfig, VectorModeKind,
};

#[derive(Parser)]
#[command(
    name = "steerage",
    about = "Probe-gated activation steering for decoder-only transformers",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    FewShot,
    FullData,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::FewShot => Mode::FewShot,
            ModeArg::FullData => Mode::FullData,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CaptureArg {
    LastToken,
    LastTenPercent,
}

impl From<CaptureArg> for CaptureKind {
    fn from(c: CaptureArg) -> Self {
        match c {
            CaptureArg::LastToken => CaptureKind::LastToken,
            CaptureArg::LastTenPercent => CaptureKind::LastTenPercent,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VectorModeArg {
    ProbeWeight,
    MassMeanDiff,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormalizationArg {
    UnitL2,
    None,
}

#[derive(Args)]
struct CommonOpts {
    /// TOML run configuration; flags override its keys
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Model weight archive
    #[arg(long)]
    archive: Option<PathBuf>,
    /// Vocab file (one token per line)
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Dataset JSON
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output directory
    #[arg(long = "out")]
    out_dir: Option<PathBuf>,
    /// Hyperparameter preset
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Steering intensity scale
    #[arg(long)]
    alpha: Option<f64>,
    /// Steering intensity offset
    #[arg(long)]
    beta: Option<f64>,
    /// Heads steered per cluster
    #[arg(long)]
    heads: Option<usize>,
    /// Number of steering-direction clusters
    #[arg(long)]
    clusters: Option<usize>,
    /// Seed for every stochastic step
    #[arg(long)]
    seed: Option<u64>,
    /// Steering vector source
    #[arg(long, value_enum)]
    vector_mode: Option<VectorModeArg>,
    /// Steering vector normalization
    #[arg(long, value_enum)]
    normalization: Option<NormalizationArg>,
    /// Activation capture positions
    #[arg(long, value_enum)]
    capture: Option<CaptureArg>,
    /// Train on a seeded subsample of this many questions
    #[arg(long)]
    subsample: Option<usize>,
    /// Skip the trivia primer during scoring and generation
    #[arg(long)]
    no_primer: bool,
    /// Length-normalize answer log-probabilities
    #[arg(long)]
    length_normalize: bool,
}

impl CommonOpts {
    fn resolve(&self) -> Result<RunConfig, steerage::Error> {
        let file = self.config.as_deref().map(FileConfig::load).transpose()?;
        let overrides = Overrides {
            archive: self.archive.clone(),
            vocab: self.vocab.clone(),
            dataset: self.dataset.clone(),
            out_dir: self.out_dir.clone(),
            mode: self.mode.map(Into::into),
            seed: self.seed,
            alpha: self.alpha,
            beta: self.beta,
            heads: self.heads,
            clusters: self.clusters,
            vector_mode: self.vector_mode.map(|v| match v {
                VectorModeArg::ProbeWeight => VectorModeKind::ProbeWeight,
                VectorModeArg::MassMeanDiff => VectorModeKind::MassMeanDiff,
            }),
            normalization: self.normalization.map(|n| match n {
                NormalizationArg::UnitL2 => NormalizationKind::UnitL2,
                NormalizationArg::None => NormalizationKind::None,
            }),
            capture: self.capture.map(Into::into),
            upsample: None,
            no_primer: self.no_primer,
            length_normalize: self.length_normalize,
            subsample_questions: self.subsample,
        };
        RunConfig::resolve(file, &overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus: dataset, model, vocab, ground truth
    Synth {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Capture probing activations into the cache
    Extract {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Cluster, train probes, and write the steering policy
    Train {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Score baseline and steered runs; write reports
    Eval {
        #[command(flatten)]
        common: CommonOpts,
        /// Steering policy for the steered section
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Two-fold cross-validation over questions (trains internally)
        #[arg(long)]
        two_fold: bool,
    },
    /// Greedy generation with optional steering
    Generate {
        #[command(flatten)]
        common: CommonOpts,
        /// Steering policy to apply
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Prompt text
        #[arg(long)]
        prompt: String,
        /// Tokens to generate
        #[arg(long, default_value_t = 16)]
        max_new: usize,
    },
    /// Pretty-print a saved evaluation report
    Report {
        /// Report JSON written by `eval`
        #[arg(long)]
        report: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), steerage::Error> {
    match cli.command {
        Command::Synth { common } => {
            let config = common.resolve()?;
            let written = cmd_synth(&config)?;
            for path in written {
                println!("{}", path.display());
            }
        }
        Command::Extract { common } => {
            let config = common.resolve()?;
            let path = cmd_extract(&config)?;
            println!("{}", path.display());
        }
        Command::Train { common } => {
            let config = common.resolve()?;
            let path = cmd_train(&config)?;
            println!("{}", path.display());
        }
        Command::Eval {
            common,
            policy,
            two_fold,
        } => {
            let config = common.resolve()?;
            if two_fold {
                let (report, path) = cmd_eval_two_fold(&config)?;
                println!("{}", path.display());
                eprintln!(
                    "two-fold mean: mc1 {:.4}  mc2 {:.4}  ce {:.4}  kl {:.4}",
                    report.mean.mc1, report.mean.mc2, report.mean.ce, report.mean.kl
                );
            } else {
                let out = cmd_eval(&config, policy.as_deref())?;
                println!("{}", out.report_path.display());
                let b = &out.report.baseline;
                eprintln!(
                    "baseline: mc1 {:.4}  mc2 {:.4}  ce {:.4}  kl {:.4}",
                    b.mc1, b.mc2, b.ce, b.kl
                );
                if let Some(s) = &out.report.steered {
                    eprintln!(
                        "steered:  mc1 {:.4}  mc2 {:.4}  ce {:.4}  kl {:.4}",
                        s.mc1, s.mc2, s.ce, s.kl
                    );
                }
            }
        }
        Command::Generate {
            common,
            policy,
            prompt,
            max_new,
        } => {
            let config = common.resolve()?;
            let out = cmd_generate(&config, policy.as_deref(), &prompt, max_new)?;
            println!("{}", out.text);
            if let Some(stats) = out.gate_stats {
                eprintln!(
                    "steered {} head firings, gate mean {:.4} min {:.4} max {:.4}",
                    stats.heads_fired, stats.mean_gate, stats.min_gate, stats.max_gate
                );
            }
        }
        Command::Report { report } => {
            print!("{}", cmd_report(&report)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not usage errors.
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
