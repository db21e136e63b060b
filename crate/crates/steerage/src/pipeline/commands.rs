//! Subcommand implementations. The CLI binary is a thin argument parser
//! over these, so integration tests drive the pipeline through the same
//! code paths.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{
    flatten_qa_pairs, format_qa, load_dataset, make_synthetic, primer_prompt, save_dataset, QaPair,
    QaRecord, SplitSpec,
};
use crate::error::{Error, Result};
use crate::eval::{
    assemble_report, export_projection, intensity_metrics, score_records, EvalReport, McOptions,
    ReportProvenance,
};
use crate::math::{fnv1a, DetRng};
use crate::model::{generate_greedy, write_atomic, Model, Tokenizer};
use crate::pipeline::cache::{load_cache, save_cache, CacheMeta};
use crate::pipeline::config::RunConfig;
use crate::probe::{
    build_policy, kmeans, load_policy, policy_hash, save_policy, train_probes_for_clusters,
    DirectionalRep, PolicyConfig, ProbeTrainConfig, ProbingData, Provenance, SteeringPolicy,
};
use crate::steering::{SteeringContext, SteeringStats};

/// Canonical file names inside the output directory.
pub mod files {
    pub const DATASET: &str = "dataset.json";
    pub const MODEL: &str = "model.bin";
    pub const VOCAB: &str = "vocab.txt";
    pub const GROUND_TRUTH: &str = "ground_truth.json";
    pub const ACTIVATIONS: &str = "activations.bin";
    pub const POLICY: &str = "policy.bin";
    pub const REPORT: &str = "report.json";
    pub const CATEGORIES: &str = "categories.csv";
    pub const PROJECTION: &str = "projection.csv";
    pub const GATE_STATS: &str = "gate_stats.json";
    pub const TWO_FOLD: &str = "two_fold_report.json";
}

fn file_hash(path: &Path) -> Result<String> {
    Ok(format!("{:016x}", fnv1a(&fs::read(path)?)))
}

fn ensure_out_dir(config: &RunConfig) -> Result<()> {
    fs::create_dir_all(&config.out_dir)?;
    Ok(())
}

struct LoadedModel {
    model: Model,
    tokenizer: Tokenizer,
}

fn load_model(config: &RunConfig) -> Result<LoadedModel> {
    let model = Model::load(&config.archive)?;
    let tokenizer = Tokenizer::from_file(&config.vocab)?;
    if tokenizer.vocab_size() != model.config().vocab_size {
        return Err(Error::Data(format!(
            "vocab file provides {} ids (incl. byte fallback) but the model expects {}",
            tokenizer.vocab_size(),
            model.config().vocab_size
        )));
    }
    Ok(LoadedModel { model, tokenizer })
}

// ── synth ───────────────────────────────────────────────────────────────

/// Write a synthetic corpus: dataset, model archive, vocab, ground truth.
pub fn cmd_synth(config: &RunConfig) -> Result<Vec<PathBuf>> {
    ensure_out_dir(config)?;
    let corpus = make_synthetic(&config.synth, config.seed)?;
    let dataset_path = config.out_dir.join(files::DATASET);
    let model_path = config.out_dir.join(files::MODEL);
    let vocab_path = config.out_dir.join(files::VOCAB);
    let truth_path = config.out_dir.join(files::GROUND_TRUTH);

    save_dataset(&dataset_path, &corpus.records)?;
    corpus.archive.save(&model_path)?;
    corpus.tokenizer.save(&vocab_path)?;
    let truth_json = serde_json::to_string_pretty(&corpus.ground_truth)
        .map_err(|e| Error::Data(format!("ground truth serialization: {e}")))?;
    write_atomic(&truth_path, truth_json.as_bytes())?;

    Ok(vec![dataset_path, model_path, vocab_path, truth_path])
}

// ── extract ─────────────────────────────────────────────────────────────

/// Capture probing activations for every pair and cache them.
pub fn cmd_extract(config: &RunConfig) -> Result<PathBuf> {
    ensure_out_dir(config)?;
    let loaded = load_model(config)?;
    let records = load_dataset(&config.dataset)?;
    let pairs = flatten_qa_pairs(&records);
    eprintln!(
        "extract: {} questions, {} categories, {} pairs",
        records.len(),
        crate::corpus::categories(&records).len(),
        pairs.len()
    );
    let data = crate::probe::build_probing_dataset(
        &loaded.model,
        &loaded.tokenizer,
        &pairs,
        config.capture.into(),
    )?;
    let meta = CacheMeta {
        config_hash: config.config_hash(),
        capture: config.capture,
        model_fingerprint: loaded.model.config().fingerprint(),
        model_hash: file_hash(&config.archive)?,
        dataset_hash: file_hash(&config.dataset)?,
        n_layers: data.n_layers,
        n_heads: data.n_heads,
        head_dim: data.head_dim,
        n_pairs: pairs.len(),
    };
    let path = config.out_dir.join(files::ACTIVATIONS);
    save_cache(&data, &meta, &path)?;
    Ok(path)
}

/// Directional representations recomputed from cached probing samples: per
/// question, mean truthful concat minus mean untruthful concat. Summation
/// runs in stored sample order, so the result is bit-identical to a fresh
/// capture pass.
pub fn reps_from_probing_data(
    data: &ProbingData,
    question_ids: &[usize],
) -> Result<Vec<DirectionalRep>> {
    let dim = data.concat_dim();
    let mut reps = Vec::with_capacity(question_ids.len());
    for &qid in question_ids {
        let mut sums = [vec![0.0; dim], vec![0.0; dim]];
        let mut counts = [0usize; 2];
        for s in data.samples.iter().filter(|s| s.question_id == qid) {
            let side = s.label as usize;
            counts[side] += 1;
            for (acc, &v) in sums[side].iter_mut().zip(s.concat.iter()) {
                *acc += v;
            }
        }
        if counts[0] == 0 || counts[1] == 0 {
            return Err(Error::Record {
                index: qid,
                reason: "question lacks probing samples on one side".into(),
            });
        }
        let concat: Vec<f64> = sums[1]
            .iter()
            .zip(sums[0].iter())
            .map(|(p, n)| p / counts[1] as f64 - n / counts[0] as f64)
            .collect();
        reps.push(DirectionalRep::from_concat(
            qid,
            data.n_layers,
            data.n_heads,
            data.head_dim,
            concat,
        )?);
    }
    Ok(reps)
}

// ── train ───────────────────────────────────────────────────────────────

fn training_question_ids(config: &RunConfig, n_questions: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..n_questions).collect();
    if let Some(n) = config.subsample_questions {
        if n < n_questions {
            let mut rng = DetRng::new(config.seed).fork(4);
            rng.shuffle(&mut ids);
            ids.truncate(n);
            ids.sort_unstable();
        }
    }
    ids
}

/// Cluster directional representations, train probes per cluster, select
/// heads, and write the steering policy.
pub fn cmd_train(config: &RunConfig) -> Result<PathBuf> {
    ensure_out_dir(config)?;
    let loaded = load_model(config)?;
    let records = load_dataset(&config.dataset)?;
    let cache_path = config.out_dir.join(files::ACTIVATIONS);
    if !cache_path.exists() {
        return Err(Error::Data(format!(
            "activation cache {} not found; run `extract` first",
            cache_path.display()
        )));
    }
    let (data, meta) = load_cache(&cache_path)?;
    let dataset_hash = file_hash(&config.dataset)?;
    if meta.model_fingerprint != loaded.model.config().fingerprint() {
        return Err(Error::Data(format!(
            "activation cache was built for model `{}`, loaded `{}`",
            meta.model_fingerprint,
            loaded.model.config().fingerprint()
        )));
    }
    if meta.model_hash != file_hash(&config.archive)? {
        return Err(Error::Data(
            "activation cache model hash mismatch (weights changed since extract)".into(),
        ));
    }
    if meta.dataset_hash != dataset_hash {
        return Err(Error::Data("activation cache dataset hash mismatch".into()));
    }
    if meta.capture != config.capture {
        return Err(Error::Data(
            "activation cache capture mode differs from the configured one".into(),
        ));
    }

    let policy = train_policy_from_data(config, &loaded, &records, &data, &dataset_hash)?;
    let path = config.out_dir.join(files::POLICY);
    save_policy(&policy, &path)?;
    Ok(path)
}

/// The in-memory training pipeline shared by `train` and two-fold
/// cross-validation.
fn train_policy_from_data(
    config: &RunConfig,
    loaded: &LoadedModel,
    records: &[QaRecord],
    data: &ProbingData,
    dataset_hash: &str,
) -> Result<SteeringPolicy> {
    let question_ids = training_question_ids(config, records.len());
    let reps = reps_from_probing_data(data, &question_ids)?;
    let points: Vec<Vec<f64>> = reps.iter().map(|r| r.concat().to_vec()).collect();
    let seed_root = DetRng::new(config.seed);
    let clusters = kmeans(
        &points,
        config.n_clusters.min(points.len()),
        seed_root.fork(1).seed(),
        100,
    )?;

    let assignment: std::collections::BTreeMap<usize, usize> = question_ids
        .iter()
        .zip(clusters.assignments.iter())
        .map(|(&q, &c)| (q, c))
        .collect();

    // Restrict probing samples to the training questions.
    let keep: BTreeSet<usize> = question_ids.iter().copied().collect();
    let train_data = ProbingData {
        n_layers: data.n_layers,
        n_heads: data.n_heads,
        head_dim: data.head_dim,
        samples: data
            .samples
            .iter()
            .filter(|s| keep.contains(&s.question_id))
            .cloned()
            .collect(),
    };

    let split = SplitSpec {
        train_fraction: 0.8,
        seed: seed_root.fork(2).seed(),
        stratify_by_question: config.stratify_split,
    };
    let probe_cfg = ProbeTrainConfig {
        seed: seed_root.fork(3).seed(),
        ..ProbeTrainConfig::default()
    };
    let by_cluster = train_probes_for_clusters(
        &train_data,
        &assignment,
        clusters.n_clusters,
        &split,
        &probe_cfg,
        config.upsample,
    )?;

    build_policy(
        &by_cluster,
        &PolicyConfig {
            alpha: config.alpha,
            beta: config.beta,
            top_k: config.top_k,
            vector_mode: config.vector_mode.into(),
            normalization: config.normalization.into(),
        },
        data.head_dim,
        Provenance {
            config_hash: config.config_hash(),
            seed: config.seed,
            model_fingerprint: loaded.model.config().fingerprint(),
            dataset_hash: dataset_hash.to_string(),
        },
    )
}

// ── eval ────────────────────────────────────────────────────────────────

/// Both report sections of one evaluation run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunReport {
    pub baseline: EvalReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steered: Option<EvalReport>,
}

pub struct EvalOutput {
    pub report: RunReport,
    pub report_path: PathBuf,
    pub gate_stats: Option<SteeringStats>,
}

fn truthful_texts(records: &[QaRecord]) -> Vec<String> {
    records
        .iter()
        .flat_map(|r| r.truthful_answers.iter().map(|a| format_qa(&r.question, a)))
        .collect()
}

/// Score baseline (and, with a policy, steered) runs; write the report,
/// per-category table, and cluster projection.
pub fn cmd_eval(config: &RunConfig, policy_path: Option<&Path>) -> Result<EvalOutput> {
    ensure_out_dir(config)?;
    let loaded = load_model(config)?;
    let records = load_dataset(&config.dataset)?;
    let dataset_hash = file_hash(&config.dataset)?;
    let mc_opts = McOptions {
        use_primer: config.use_primer,
        length_normalize: config.length_normalize,
    };
    let texts = truthful_texts(&records);

    let provenance = |policy_hash: Option<String>| ReportProvenance {
        config_hash: config.config_hash(),
        dataset_hash: dataset_hash.clone(),
        model_fingerprint: loaded.model.config().fingerprint(),
        policy_hash,
        seed: config.seed,
    };

    let baseline_scores =
        score_records(&loaded.model, &loaded.tokenizer, &records, None, &mc_opts)?;
    let baseline_intensity = intensity_metrics(&loaded.model, &loaded.tokenizer, &texts, None)?;
    let baseline = assemble_report(&baseline_scores, &baseline_intensity, provenance(None));

    let mut steered = None;
    let mut gate_stats = None;
    if let Some(path) = policy_path {
        let policy = load_policy(path)?;
        if policy.provenance.model_fingerprint != loaded.model.config().fingerprint() {
            return Err(Error::Policy(format!(
                "policy was trained for model `{}`, loaded `{}`",
                policy.provenance.model_fingerprint,
                loaded.model.config().fingerprint()
            )));
        }
        let hash = policy_hash(&policy)?;
        let mut ctx = SteeringContext::new(&policy, loaded.model.config())?;
        let steered_scores = score_records(
            &loaded.model,
            &loaded.tokenizer,
            &records,
            Some(&mut ctx),
            &mc_opts,
        )?;
        let steered_intensity =
            intensity_metrics(&loaded.model, &loaded.tokenizer, &texts, Some(&mut ctx))?;
        steered = Some(assemble_report(
            &steered_scores,
            &steered_intensity,
            provenance(Some(hash)),
        ));
        write_atomic(
            &config.out_dir.join(files::GATE_STATS),
            serde_json::to_string_pretty(&ctx.stats_json())
                .map_err(|e| Error::Data(format!("gate stats: {e}")))?
                .as_bytes(),
        )?;
        gate_stats = Some(ctx.stats.clone());
    }

    // Per-category table.
    let mut table = String::from(if steered.is_some() {
        "category,n,baseline_mc1,baseline_mc2,steered_mc1,steered_mc2\n"
    } else {
        "category,n,baseline_mc1,baseline_mc2\n"
    });
    for (category, stats) in &baseline.per_category {
        match steered.as_ref().and_then(|s| s.per_category.get(category)) {
            Some(st) => table.push_str(&format!(
                "{category},{},{},{},{},{}\n",
                stats.n, stats.mc1, stats.mc2, st.mc1, st.mc2
            )),
            None => table.push_str(&format!(
                "{category},{},{},{}\n",
                stats.n, stats.mc1, stats.mc2
            )),
        }
    }
    write_atomic(&config.out_dir.join(files::CATEGORIES), table.as_bytes())?;

    // Cluster projection of fresh directional representations.
    let pairs = flatten_qa_pairs(&records);
    let data = crate::probe::build_probing_dataset(
        &loaded.model,
        &loaded.tokenizer,
        &pairs,
        config.capture.into(),
    )?;
    let question_ids: Vec<usize> = (0..records.len()).collect();
    let reps = reps_from_probing_data(&data, &question_ids)?;
    let points: Vec<Vec<f64>> = reps.iter().map(|r| r.concat().to_vec()).collect();
    let clusters = kmeans(
        &points,
        config.n_clusters.min(points.len()),
        DetRng::new(config.seed).fork(1).seed(),
        100,
    )?;
    let categories: Vec<String> = records.iter().map(|r| r.category.clone()).collect();
    export_projection(
        &reps,
        &categories,
        &clusters.assignments,
        &config.out_dir.join(files::PROJECTION),
    )?;

    let report = RunReport { baseline, steered };
    let report_path = config.out_dir.join(files::REPORT);
    write_atomic(
        &report_path,
        serde_json::to_string_pretty(&report)
            .map_err(|e| Error::Data(format!("report: {e}")))?
            .as_bytes(),
    )?;
    Ok(EvalOutput {
        report,
        report_path,
        gate_stats,
    })
}

// ── generate ────────────────────────────────────────────────────────────

pub struct GenerateOutput {
    pub text: String,
    pub new_tokens: usize,
    pub gate_stats: Option<SteeringStats>,
}

/// Greedy generation with optional steering.
pub fn cmd_generate(
    config: &RunConfig,
    policy_path: Option<&Path>,
    prompt: &str,
    max_new: usize,
) -> Result<GenerateOutput> {
    let loaded = load_model(config)?;
    let full_prompt = if config.use_primer {
        format!("{}\n\n{prompt}", primer_prompt())
    } else {
        prompt.to_string()
    };
    let prompt_ids = loaded.tokenizer.tokenize(&full_prompt);
    if prompt_ids.is_empty() {
        return Err(Error::EmptySequence);
    }

    let policy = policy_path.map(load_policy).transpose()?;
    let mut ctx = match &policy {
        Some(p) => {
            if p.provenance.model_fingerprint != loaded.model.config().fingerprint() {
                return Err(Error::Policy(format!(
                    "policy was trained for model `{}`, loaded `{}`",
                    p.provenance.model_fingerprint,
                    loaded.model.config().fingerprint()
                )));
            }
            Some(SteeringContext::new(p, loaded.model.config())?)
        }
        None => None,
    };

    let ids = generate_greedy(
        &loaded.model,
        &prompt_ids,
        max_new,
        &BTreeSet::new(),
        ctx.as_mut().map(|c| c as &mut dyn crate::model::HeadHook),
    )?;
    let new_tokens = ids.len() - prompt_ids.len();
    let text = loaded.tokenizer.detokenize(&ids)?;
    Ok(GenerateOutput {
        text,
        new_tokens,
        gate_stats: ctx.map(|c| c.stats),
    })
}

// ── report ──────────────────────────────────────────────────────────────

/// Render a saved report as a small table.
pub fn cmd_report(report_path: &Path) -> Result<String> {
    let text = fs::read_to_string(report_path)?;
    let report: RunReport =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("report JSON: {e}")))?;
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} {:>8} {:>8} {:>8} {:>8}\n",
        "run", "mc1", "mc2", "ce", "kl"
    ));
    let mut row = |name: &str, r: &EvalReport| {
        out.push_str(&format!(
            "{:<10} {:>8.4} {:>8.4} {:>8.4} {:>8.4}\n",
            name, r.mc1, r.mc2, r.ce, r.kl
        ));
    };
    row("baseline", &report.baseline);
    if let Some(steered) = &report.steered {
        row("steered", steered);
    }
    out.push('\n');
    out.push_str(&format!(
        "{:<24} {:>4} {:>8} {:>8}\n",
        "category", "n", "mc1", "mc2"
    ));
    let section = report.steered.as_ref().unwrap_or(&report.baseline);
    for (category, stats) in &section.per_category {
        out.push_str(&format!(
            "{:<24} {:>4} {:>8.4} {:>8.4}\n",
            category, stats.n, stats.mc1, stats.mc2
        ));
    }
    Ok(out)
}

// ── two-fold cross-validation ───────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoFoldSummary {
    pub mc1: f64,
    pub mc2: f64,
    pub ce: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoFoldReport {
    pub folds: Vec<EvalReport>,
    pub mean: TwoFoldSummary,
}

fn pairs_for_questions(pairs: &[QaPair], keep: &BTreeSet<usize>) -> Vec<QaPair> {
    pairs
        .iter()
        .filter(|p| keep.contains(&p.question_id))
        .cloned()
        .collect()
}

/// Split questions 50/50 by seed, train on each fold, evaluate steered
/// metrics on the opposite fold, and report the mean.
pub fn cmd_eval_two_fold(config: &RunConfig) -> Result<(TwoFoldReport, PathBuf)> {
    ensure_out_dir(config)?;
    let loaded = load_model(config)?;
    let records = load_dataset(&config.dataset)?;
    if records.len() < 4 {
        return Err(Error::Data(
            "two-fold validation needs at least 4 questions".into(),
        ));
    }
    let dataset_hash = file_hash(&config.dataset)?;
    let all_pairs = flatten_qa_pairs(&records);

    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut rng = DetRng::new(config.seed).fork(0x2f01d);
    rng.shuffle(&mut order);
    let half = records.len() / 2;
    let fold_a: BTreeSet<usize> = order[..half].iter().copied().collect();
    let fold_b: BTreeSet<usize> = order[half..].iter().copied().collect();

    let mc_opts = McOptions {
        use_primer: config.use_primer,
        length_normalize: config.length_normalize,
    };

    let mut folds = Vec::new();
    for (train_fold, eval_fold) in [(&fold_a, &fold_b), (&fold_b, &fold_a)] {
        let train_pairs = pairs_for_questions(&all_pairs, train_fold);
        let data = crate::probe::build_probing_dataset(
            &loaded.model,
            &loaded.tokenizer,
            &train_pairs,
            config.capture.into(),
        )?;
        // Question ids inside `data` are the original indices; feed the
        // trainer the id list it actually saw.
        let policy = {
            let question_ids: Vec<usize> = train_fold.iter().copied().collect();
            let reps = reps_from_probing_data(&data, &question_ids)?;
            let points: Vec<Vec<f64>> = reps.iter().map(|r| r.concat().to_vec()).collect();
            let seed_root = DetRng::new(config.seed);
            let clusters = kmeans(
                &points,
                config.n_clusters.min(points.len()),
                seed_root.fork(1).seed(),
                100,
            )?;
            let assignment: std::collections::BTreeMap<usize, usize> = question_ids
                .iter()
                .zip(clusters.assignments.iter())
                .map(|(&q, &c)| (q, c))
                .collect();
            let split = SplitSpec {
                train_fraction: 0.8,
                seed: seed_root.fork(2).seed(),
                stratify_by_question: config.stratify_split,
            };
            let by_cluster = train_probes_for_clusters(
                &data,
                &assignment,
                clusters.n_clusters,
                &split,
                &ProbeTrainConfig {
                    seed: seed_root.fork(3).seed(),
                    ..ProbeTrainConfig::default()
                },
                config.upsample,
            )?;
            build_policy(
                &by_cluster,
                &PolicyConfig {
                    alpha: config.alpha,
                    beta: config.beta,
                    top_k: config.top_k,
                    vector_mode: config.vector_mode.into(),
                    normalization: config.normalization.into(),
                },
                data.head_dim,
                Provenance {
                    config_hash: config.config_hash(),
                    seed: config.seed,
                    model_fingerprint: loaded.model.config().fingerprint(),
                    dataset_hash: dataset_hash.clone(),
                },
            )?
        };

        let eval_records: Vec<QaRecord> = eval_fold.iter().map(|&q| records[q].clone()).collect();
        let hash = policy_hash(&policy)?;
        let mut ctx = SteeringContext::new(&policy, loaded.model.config())?;
        let scores = score_records(
            &loaded.model,
            &loaded.tokenizer,
            &eval_records,
            Some(&mut ctx),
            &mc_opts,
        )?;
        let texts = truthful_texts(&eval_records);
        let intensity =
            intensity_metrics(&loaded.model, &loaded.tokenizer, &texts, Some(&mut ctx))?;
        folds.push(assemble_report(
            &scores,
            &intensity,
            ReportProvenance {
                config_hash: config.config_hash(),
                dataset_hash: dataset_hash.clone(),
                model_fingerprint: loaded.model.config().fingerprint(),
                policy_hash: Some(hash),
                seed: config.seed,
            },
        ));
    }

    let mean = TwoFoldSummary {
        mc1: (folds[0].mc1 + folds[1].mc1) / 2.0,
        mc2: (folds[0].mc2 + folds[1].mc2) / 2.0,
        ce: (folds[0].ce + folds[1].ce) / 2.0,
        kl: (folds[0].kl + folds[1].kl) / 2.0,
    };
    let report = TwoFoldReport { folds, mean };
    let path = config.out_dir.join(files::TWO_FOLD);
    write_atomic(
        &path,
        serde_json::to_string_pretty(&report)
            .map_err(|e| Error::Data(format!("two-fold report: {e}")))?
            .as_bytes(),
    )?;
    Ok((report, path))
}
