//! QA dataset loading and flattening.
//!
//! On disk a dataset is a JSON array of objects
//! `{question, truthful_answers, untruthful_answers, category, gold?}`.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::archive::write_atomic;

/// One question with its labeled answer sets.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct QaRecord {
    pub question: String,
    pub truthful_answers: Vec<String>,
    pub untruthful_answers: Vec<String>,
    pub category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<String>,
}

/// One (question, answer) pair with a binary truthfulness label.
#[derive(Debug, Clone, PartialEq)]
pub struct QaPair {
    pub question_id: usize,
    pub question: String,
    pub answer: String,
    /// 1 = truthful, 0 = untruthful.
    pub label: u8,
    pub category: String,
}

fn validate_record(index: usize, record: &QaRecord) -> Result<()> {
    if record.question.is_empty() {
        return Err(Error::Record {
            index,
            reason: "question is empty".into(),
        });
    }
    if record.truthful_answers.is_empty() {
        return Err(Error::Record {
            index,
            reason: "truthful_answers is empty".into(),
        });
    }
    if record.untruthful_answers.is_empty() {
        return Err(Error::Record {
            index,
            reason: "untruthful_answers is empty".into(),
        });
    }
    if record.category.is_empty() {
        return Err(Error::Record {
            index,
            reason: "category is empty".into(),
        });
    }
    Ok(())
}

/// Load and validate a dataset file.
pub fn load_dataset(path: &Path) -> Result<Vec<QaRecord>> {
    let text = fs::read_to_string(path)?;
    parse_dataset(&text)
}

/// Parse a dataset from JSON text, validating every record.
pub fn parse_dataset(text: &str) -> Result<Vec<QaRecord>> {
    let records: Vec<QaRecord> =
        serde_json::from_str(text).map_err(|e| Error::Data(format!("dataset JSON: {e}")))?;
    for (i, r) in records.iter().enumerate() {
        validate_record(i, r)?;
    }
    Ok(records)
}

pub fn save_dataset(path: &Path, records: &[QaRecord]) -> Result<()> {
    let text = serde_json::to_string_pretty(records)
        .map_err(|e| Error::Data(format!("dataset serialization: {e}")))?;
    write_atomic(path, text.as_bytes())
}

/// Distinct category labels, sorted.
pub fn categories(records: &[QaRecord]) -> Vec<String> {
    let set: BTreeSet<&str> = records.iter().map(|r| r.category.as_str()).collect();
    set.into_iter().map(str::to_string).collect()
}

/// One pair per (question, answer): truthful answers first, labels matching
/// the source list, question ids stable.
pub fn flatten_qa_pairs(records: &[QaRecord]) -> Vec<QaPair> {
    let mut pairs = Vec::new();
    for (question_id, r) in records.iter().enumerate() {
        for answer in &r.truthful_answers {
            pairs.push(QaPair {
                question_id,
                question: r.question.clone(),
                answer: answer.clone(),
                label: 1,
                category: r.category.clone(),
            });
        }
        for answer in &r.untruthful_answers {
            pairs.push(QaPair {
                question_id,
                question: r.question.clone(),
                answer: answer.clone(),
                label: 0,
                category: r.category.clone(),
            });
        }
    }
    pairs
}
