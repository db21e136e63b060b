//! Run configuration: mode presets, config file, and flag overrides.
//!
//! Precedence, lowest to highest: built-in mode preset, config file keys,
//! command-line flags. The resolved configuration is hashed into every
//! policy and report for provenance.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{SignalHeads, SyntheticConfig};
use crate::error::{Error, Result};
use crate::math::fnv1a;
use crate::probe::{CaptureMode, Normalization, VectorMode};

/// Experiment regime. Each mode resolves to its preset hyperparameters
/// unless individually overridden.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// alpha 15, beta 0.1, top-24 heads, 2 clusters, last-10% capture,
    /// upsampling on.
    FewShot,
    /// alpha 12, beta 0, top-24 heads, 3 clusters, last-token capture.
    FullData,
}

struct Preset {
    alpha: f64,
    beta: f64,
    top_k: usize,
    n_clusters: usize,
    capture: CaptureKind,
    upsample: bool,
}

impl Mode {
    fn preset(self) -> Preset {
        match self {
            Mode::FewShot => Preset {
                alpha: 15.0,
                beta: 0.1,
                top_k: 24,
                n_clusters: 2,
                capture: CaptureKind::LastTenPercent,
                upsample: true,
            },
            Mode::FullData => Preset {
                alpha: 12.0,
                beta: 0.0,
                top_k: 24,
                n_clusters: 3,
                capture: CaptureKind::LastToken,
                upsample: false,
            },
        }
    }
}

/// Serializable mirror of [`CaptureMode`] for config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaptureKind {
    LastToken,
    LastTenPercent,
}

impl From<CaptureKind> for CaptureMode {
    fn from(kind: CaptureKind) -> Self {
        match kind {
            CaptureKind::LastToken => CaptureMode::LastToken,
            CaptureKind::LastTenPercent => CaptureMode::LastTenPercent,
        }
    }
}

/// `[synth]` section of the config file.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub n_questions: Option<usize>,
    pub n_truthful: Option<usize>,
    pub n_untruthful: Option<usize>,
    pub n_categories: Option<usize>,
    pub noise_scale: Option<f64>,
    pub n_layers: Option<usize>,
    pub n_heads: Option<usize>,
    pub head_dim: Option<usize>,
    pub max_seq: Option<usize>,
    pub signal_strength: Option<f64>,
    pub unembed_gain: Option<f64>,
    /// Restrict the planted signal to these (layer, head) pairs.
    pub signal_heads: Option<Vec<(usize, usize)>>,
}

impl SynthSection {
    pub fn to_synthetic_config(&self) -> SyntheticConfig {
        let d = SyntheticConfig::default();
        SyntheticConfig {
            n_questions: self.n_questions.unwrap_or(d.n_questions),
            n_truthful: self.n_truthful.unwrap_or(d.n_truthful),
            n_untruthful: self.n_untruthful.unwrap_or(d.n_untruthful),
            n_categories: self.n_categories.unwrap_or(d.n_categories),
            noise_scale: self.noise_scale.unwrap_or(d.noise_scale),
            n_layers: self.n_layers.unwrap_or(d.n_layers),
            n_heads: self.n_heads.unwrap_or(d.n_heads),
            head_dim: self.head_dim.unwrap_or(d.head_dim),
            max_seq: self.max_seq.unwrap_or(d.max_seq),
            signal_strength: self.signal_strength.unwrap_or(d.signal_strength),
            unembed_gain: self.unembed_gain.unwrap_or(d.unembed_gain),
            signal_heads: match &self.signal_heads {
                Some(list) => SignalHeads::Only(list.clone()),
                None => SignalHeads::All,
            },
        }
    }
}

/// Config file contents; every key optional.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub archive: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub heads: Option<usize>,
    pub clusters: Option<usize>,
    pub vector_mode: Option<VectorModeKind>,
    pub normalization: Option<NormalizationKind>,
    pub capture: Option<CaptureKind>,
    pub upsample: Option<bool>,
    pub use_primer: Option<bool>,
    pub length_normalize: Option<bool>,
    pub stratify_split: Option<bool>,
    pub subsample_questions: Option<usize>,
    #[serde(default)]
    pub synth: Option<SynthSection>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VectorModeKind {
    ProbeWeight,
    MassMeanDiff,
}

impl From<VectorModeKind> for VectorMode {
    fn from(k: VectorModeKind) -> Self {
        match k {
            VectorModeKind::ProbeWeight => VectorMode::ProbeWeight,
            VectorModeKind::MassMeanDiff => VectorMode::MassMeanDiff,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationKind {
    UnitL2,
    None,
}

impl From<NormalizationKind> for Normalization {
    fn from(k: NormalizationKind) -> Self {
        match k {
            NormalizationKind::UnitL2 => Normalization::UnitL2,
            NormalizationKind::None => Normalization::None,
        }
    }
}

/// Flag-level overrides, already parsed by the CLI layer.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub archive: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub heads: Option<usize>,
    pub clusters: Option<usize>,
    pub vector_mode: Option<VectorModeKind>,
    pub normalization: Option<NormalizationKind>,
    pub capture: Option<CaptureKind>,
    pub upsample: Option<bool>,
    pub no_primer: bool,
    pub length_normalize: bool,
    pub subsample_questions: Option<usize>,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub archive: PathBuf,
    pub vocab: PathBuf,
    pub dataset: PathBuf,
    pub out_dir: PathBuf,
    pub mode: Mode,
    pub seed: u64,
    pub alpha: f64,
    pub beta: f64,
    pub top_k: usize,
    pub n_clusters: usize,
    pub vector_mode: VectorModeKind,
    pub normalization: NormalizationKind,
    pub capture: CaptureKind,
    pub upsample: bool,
    pub use_primer: bool,
    pub length_normalize: bool,
    pub stratify_split: bool,
    pub subsample_questions: Option<usize>,
    #[serde(skip)]
    pub synth: SyntheticConfig,
}

impl RunConfig {
    /// Merge preset, file, and flags. Paths default into `out_dir` so the
    /// synth -> extract -> train -> eval chain works with one `--out`.
    pub fn resolve(file: Option<FileConfig>, flags: &Overrides) -> Result<RunConfig> {
        let file = file.unwrap_or_default();
        let mode = flags.mode.or(file.mode).unwrap_or(Mode::FullData);
        let preset = mode.preset();
        let out_dir = flags
            .out_dir
            .clone()
            .or(file.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        let default_in_out = |name: &str| out_dir.join(name);

        let config = RunConfig {
            archive: flags
                .archive
                .clone()
                .or(file.archive.clone())
                .unwrap_or_else(|| default_in_out("model.bin")),
            vocab: flags
                .vocab
                .clone()
                .or(file.vocab.clone())
                .unwrap_or_else(|| default_in_out("vocab.txt")),
            dataset: flags
                .dataset
                .clone()
                .or(file.dataset.clone())
                .unwrap_or_else(|| default_in_out("dataset.json")),
            out_dir,
            mode,
            seed: flags.seed.or(file.seed).unwrap_or(0),
            alpha: flags.alpha.or(file.alpha).unwrap_or(preset.alpha),
            beta: flags.beta.or(file.beta).unwrap_or(preset.beta),
            top_k: flags.heads.or(file.heads).unwrap_or(preset.top_k),
            n_clusters: flags
                .clusters
                .or(file.clusters)
                .unwrap_or(preset.n_clusters),
            vector_mode: flags
                .vector_mode
                .or(file.vector_mode)
                .unwrap_or(VectorModeKind::ProbeWeight),
            normalization: flags
                .normalization
                .or(file.normalization)
                .unwrap_or(NormalizationKind::UnitL2),
            capture: flags.capture.or(file.capture).unwrap_or(preset.capture),
            upsample: flags.upsample.or(file.upsample).unwrap_or(preset.upsample),
            use_primer: if flags.no_primer {
                false
            } else {
                file.use_primer.unwrap_or(true)
            },
            length_normalize: flags.length_normalize || file.length_normalize.unwrap_or(false),
            stratify_split: file.stratify_split.unwrap_or(false),
            subsample_questions: flags.subsample_questions.or(file.subsample_questions),
            synth: file
                .synth
                .as_ref()
                .map(SynthSection::to_synthetic_config)
                .unwrap_or_default(),
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        if !self.beta.is_finite() {
            return Err(Error::Config("beta must be finite".into()));
        }
        if self.top_k == 0 {
            return Err(Error::Config("heads must be >= 1".into()));
        }
        if self.n_clusters == 0 {
            return Err(Error::Config("clusters must be >= 1".into()));
        }
        if self.subsample_questions == Some(0) {
            return Err(Error::Config("subsample must be >= 1".into()));
        }
        Ok(())
    }

    /// Stable hash over the semantic configuration. File paths are
    /// excluded on purpose: the same experiment in a different directory
    /// is the same experiment, and output bytes must not depend on where
    /// they land.
    pub fn config_hash(&self) -> String {
        #[derive(Serialize)]
        struct Semantic<'a> {
            mode: Mode,
            seed: u64,
            alpha: f64,
            beta: f64,
            top_k: usize,
            n_clusters: usize,
            vector_mode: VectorModeKind,
            normalization: NormalizationKind,
            capture: CaptureKind,
            upsample: bool,
            use_primer: bool,
            length_normalize: bool,
            stratify_split: bool,
            subsample_questions: Option<usize>,
            synth: SynthFingerprint<'a>,
        }
        #[derive(Serialize)]
        struct SynthFingerprint<'a> {
            n_questions: usize,
            n_truthful: usize,
            n_untruthful: usize,
            n_categories: usize,
            noise_scale: f64,
            n_layers: usize,
            n_heads: usize,
            head_dim: usize,
            max_seq: usize,
            signal_strength: f64,
            unembed_gain: f64,
            signal_heads: &'a SignalHeads,
        }
        let semantic = Semantic {
            mode: self.mode,
            seed: self.seed,
            alpha: self.alpha,
            beta: self.beta,
            top_k: self.top_k,
            n_clusters: self.n_clusters,
            vector_mode: self.vector_mode,
            normalization: self.normalization,
            capture: self.capture,
            upsample: self.upsample,
            use_primer: self.use_primer,
            length_normalize: self.length_normalize,
            stratify_split: self.stratify_split,
            subsample_questions: self.subsample_questions,
            synth: SynthFingerprint {
                n_questions: self.synth.n_questions,
                n_truthful: self.synth.n_truthful,
                n_untruthful: self.synth.n_untruthful,
                n_categories: self.synth.n_categories,
                noise_scale: self.synth.noise_scale,
                n_layers: self.synth.n_layers,
                n_heads: self.synth.n_heads,
                head_dim: self.synth.head_dim,
                max_seq: self.synth.max_seq,
                signal_strength: self.synth.signal_strength,
                unembed_gain: self.synth.unembed_gain,
                signal_heads: &self.synth.signal_heads,
            },
        };
        let canonical = serde_json::to_vec(&semantic).expect("config serializes");
        format!("{:016x}", fnv1a(&canonical))
    }
}
