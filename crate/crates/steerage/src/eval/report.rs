//! Evaluation reports: aggregate and per-category metrics with provenance.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::intensity::IntensityMetrics;
use crate::eval::mc::{mc1_from_scores, mc2_from_scores, QuestionScores};
use crate::model::write_atomic;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CategoryStats {
    pub mc1: f64,
    pub mc2: f64,
    pub n: usize,
}

/// What produced a report: hashes of the run configuration, dataset, and
/// (for steered runs) the policy file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct ReportProvenance {
    pub config_hash: String,
    pub dataset_hash: String,
    pub model_fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_hash: Option<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    pub mc1: f64,
    pub mc2: f64,
    pub ce: f64,
    pub kl: f64,
    pub per_category: BTreeMap<String, CategoryStats>,
    pub config_provenance: ReportProvenance,
}

/// Group question scores by category. The question-weighted mean of the
/// per-category entries reproduces the aggregates exactly.
pub fn category_report(scores: &[QuestionScores]) -> BTreeMap<String, CategoryStats> {
    let mut by_category: BTreeMap<String, Vec<&QuestionScores>> = BTreeMap::new();
    for s in scores {
        by_category.entry(s.category.clone()).or_default().push(s);
    }
    by_category
        .into_iter()
        .map(|(category, members)| {
            let owned: Vec<QuestionScores> = members.into_iter().cloned().collect();
            (
                category,
                CategoryStats {
                    mc1: mc1_from_scores(&owned),
                    mc2: mc2_from_scores(&owned),
                    n: owned.len(),
                },
            )
        })
        .collect()
}

/// Assemble a report from scored questions and intensity metrics.
pub fn assemble_report(
    scores: &[QuestionScores],
    intensity: &IntensityMetrics,
    provenance: ReportProvenance,
) -> EvalReport {
    EvalReport {
        mc1: mc1_from_scores(scores),
        mc2: mc2_from_scores(scores),
        ce: intensity.ce,
        kl: intensity.kl,
        per_category: category_report(scores),
        config_provenance: provenance,
    }
}

pub fn save_report(report: &EvalReport, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Data(format!("report serialization: {e}")))?;
    write_atomic(path, text.as_bytes())
}

pub fn load_report(path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("report JSON: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(category: &str, truthful: f64, untruthful: f64) -> QuestionScores {
        QuestionScores {
            question_id: 0,
            category: category.into(),
            truthful: vec![truthful],
            untruthful: vec![untruthful],
        }
    }

    #[test]
    fn single_category_report_equals_aggregates() {
        let qs = vec![scores("x", -1.0, -2.0), scores("x", -3.0, -1.0)];
        let report = category_report(&qs);
        assert_eq!(report.len(), 1);
        let stats = &report["x"];
        assert_eq!(stats.n, 2);
        assert!((stats.mc1 - mc1_from_scores(&qs)).abs() < 1e-15);
        assert!((stats.mc2 - mc2_from_scores(&qs)).abs() < 1e-15);
    }

    #[test]
    fn weighted_mean_of_categories_is_the_aggregate() {
        // Three questions correct in "a", one incorrect in "b": 0.75.
        let qs = vec![
            scores("a", -1.0, -2.0),
            scores("a", -1.0, -2.0),
            scores("a", -1.0, -2.0),
            scores("b", -2.0, -1.0),
        ];
        let report = category_report(&qs);
        assert_eq!(report["a"].mc1, 1.0);
        assert_eq!(report["b"].mc1, 0.0);
        let total: usize = report.values().map(|s| s.n).sum();
        let weighted: f64 = report.values().map(|s| s.mc1 * s.n as f64).sum::<f64>() / total as f64;
        assert!((weighted - mc1_from_scores(&qs)).abs() < 1e-12);
        assert!((weighted - 0.75).abs() < 1e-12);

        let weighted_mc2: f64 =
            report.values().map(|s| s.mc2 * s.n as f64).sum::<f64>() / total as f64;
        assert!((weighted_mc2 - mc2_from_scores(&qs)).abs() < 1e-12);
    }

    #[test]
    fn report_file_round_trip() {
        let qs = vec![scores("cat0", -1.0, -2.0)];
        let intensity = IntensityMetrics {
            ce: 1.5,
            kl: 0.25,
            positions: 10,
        };
        let report = assemble_report(&qs, &intensity, ReportProvenance::default());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        save_report(&report, &path).unwrap();
        assert_eq!(load_report(&path).unwrap(), report);
    }
}
