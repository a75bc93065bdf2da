//! Function-tag and verifiability annotation of segmented steps.
//!
//! Malformed or partial model output never aborts the run: missing steps get
//! a conservative default and a note explaining why, which the pipeline
//! records in the report provenance.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use crate::gateway::{extract_json, vars, Gateway, GatewayError, TemplateName};
use crate::model::{FunctionTag, StepIndex, VerifiabilityAssessment, VerifiabilityCategory};

pub const MISSING_EXPLANATION: &str = "missing from model output";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnnotateError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("unparseable model output: {0}")]
    Parse(String),
    #[error("no steps to annotate")]
    EmptyInput,
}

/// Chunking of long traces into overlapping windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowConfig {
    pub size: usize,
    pub overlap: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig { size: 120, overlap: 5 }
    }
}

/// Per-step results plus notes about any defaults that were applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotated<T> {
    pub by_step: BTreeMap<StepIndex, T>,
    pub notes: Vec<String>,
}

/// Half-open ranges of 0-based step offsets covering `n` steps.
pub fn windows(n: usize, config: WindowConfig) -> Vec<(usize, usize)> {
    let size = config.size.max(1);
    let stride = size.saturating_sub(config.overlap).max(1);
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + size).min(n);
        out.push((start, end));
        if end == n {
            break;
        }
        start += stride;
    }
    out
}

pub fn classify_steps(
    gateway: &Gateway,
    question: &str,
    steps: &[String],
    config: WindowConfig,
) -> Result<Annotated<Vec<FunctionTag>>, AnnotateError> {
    if steps.is_empty() {
        return Err(AnnotateError::EmptyInput);
    }
    let parsed: Vec<Result<BTreeMap<StepIndex, Vec<FunctionTag>>, AnnotateError>> = windows(steps.len(), config)
        .into_par_iter()
        .map(|(lo, hi)| {
            let listing = (lo..hi)
                .map(|i| format!("Step {}: {}", i + 1, steps[i]))
                .collect::<Vec<_>>()
                .join("\n");
            let text = gateway.complete_template(
                TemplateName::StepClassification,
                vars([("TASK_QUESTION", question.to_string()), ("FULL_COT_STEP", listing)]),
            )?;
            parse_classification(&text, lo as StepIndex + 1, hi as StepIndex)
        })
        .collect();

    let mut merged = BTreeMap::new();
    for window in parsed {
        // later windows win on overlap
        merged.extend(window?);
    }
    let mut notes = Vec::new();
    let mut by_step = BTreeMap::new();
    for index in 1..=steps.len() as StepIndex {
        let tags = match merged.remove(&index) {
            Some(tags) if !tags.is_empty() => tags,
            Some(_) => {
                notes.push(format!("step {index}: no recognized function tag, defaulted to unknown"));
                vec![FunctionTag::Unknown]
            }
            None => {
                notes.push(format!("step {index}: missing from classification output, defaulted to unknown"));
                vec![FunctionTag::Unknown]
            }
        };
        by_step.insert(index, tags);
    }
    Ok(Annotated { by_step, notes })
}

/// Parses the keyed-object classification grammar, keeping keys in `lo..=hi`.
///
/// A step whose tags were all unrecognized maps to an empty list.
pub fn parse_classification(
    text: &str,
    lo: StepIndex,
    hi: StepIndex,
) -> Result<BTreeMap<StepIndex, Vec<FunctionTag>>, AnnotateError> {
    let value = extract_json(text).map_err(|e| AnnotateError::Parse(e.to_string()))?;
    let Value::Object(map) = value else {
        return Err(AnnotateError::Parse("expected a JSON object keyed by step index".into()));
    };
    let mut out = BTreeMap::new();
    for (key, entry) in map {
        let Ok(index) = key.trim().trim_start_matches("Step").trim().parse::<StepIndex>() else {
            continue;
        };
        if !(lo..=hi).contains(&index) {
            continue;
        }
        let raw = match &entry {
            Value::Object(fields) => fields.get("function_tag").or_else(|| fields.get("function_tags")),
            other => Some(other),
        };
        let mut tags: Vec<FunctionTag> = Vec::new();
        let strings: Vec<&str> = match raw {
            Some(Value::String(s)) => vec![s.as_str()],
            Some(Value::Array(items)) => items.iter().filter_map(Value::as_str).collect(),
            _ => Vec::new(),
        };
        for tag in strings.into_iter().filter_map(FunctionTag::parse_lenient) {
            if !tags.contains(&tag) {
                tags.push(tag);
            }
        }
        if tags.len() > 1 {
            tags.retain(|t| *t != FunctionTag::Unknown);
        }
        out.insert(index, tags);
    }
    Ok(out)
}

pub fn assess_verifiability(
    gateway: &Gateway,
    steps: &[String],
    config: WindowConfig,
) -> Result<Annotated<VerifiabilityAssessment>, AnnotateError> {
    if steps.is_empty() {
        return Err(AnnotateError::EmptyInput);
    }
    type Batch = (BTreeMap<StepIndex, VerifiabilityAssessment>, Vec<String>);
    let parsed: Vec<Result<Batch, AnnotateError>> =
        windows(steps.len(), config)
            .into_par_iter()
            .map(|(lo, hi)| {
                let batch: Vec<Value> = (lo..hi)
                    .map(|i| json!({"id": (i + 1).to_string(), "statement": steps[i]}))
                    .collect();
                let text = gateway.complete_template(
                    TemplateName::Verifiability,
                    vars([("FULL_COT_STEP", Value::Array(batch).to_string())]),
                )?;
                parse_verifiability(&text, lo as StepIndex + 1, hi as StepIndex)
            })
            .collect();

    let mut merged = BTreeMap::new();
    let mut notes = Vec::new();
    for window in parsed {
        let (assessments, window_notes) = window?;
        merged.extend(assessments);
        notes.extend(window_notes);
    }
    let mut by_step = BTreeMap::new();
    for index in 1..=steps.len() as StepIndex {
        let assessment = merged.remove(&index).unwrap_or_else(|| {
            notes.push(format!("step {index}: missing from verifiability output, defaulted to non_verifiable"));
            VerifiabilityAssessment {
                category: VerifiabilityCategory::NonVerifiable,
                explanation: MISSING_EXPLANATION.to_string(),
                confidence: 0.0,
            }
        });
        by_step.insert(index, assessment);
    }
    Ok(Annotated { by_step, notes })
}

/// Parses the verifiability array grammar, keeping ids in `lo..=hi`.
pub fn parse_verifiability(
    text: &str,
    lo: StepIndex,
    hi: StepIndex,
) -> Result<(BTreeMap<StepIndex, VerifiabilityAssessment>, Vec<String>), AnnotateError> {
    let value = extract_json(text).map_err(|e| AnnotateError::Parse(e.to_string()))?;
    let items = match value {
        Value::Array(items) => items,
        Value::Object(map) => match map.into_iter().find_map(|(_, v)| match v {
            Value::Array(items) => Some(items),
            _ => None,
        }) {
            Some(items) => items,
            None => return Err(AnnotateError::Parse("expected a JSON array of assessments".into())),
        },
        _ => return Err(AnnotateError::Parse("expected a JSON array of assessments".into())),
    };
    let mut out = BTreeMap::new();
    let mut notes = Vec::new();
    for item in items {
        let Some(index) = item.get("id").and_then(index_of) else {
            continue;
        };
        if !(lo..=hi).contains(&index) || out.contains_key(&index) {
            continue;
        }
        let raw_category = item.get("category").and_then(Value::as_str).unwrap_or_default();
        let category = parse_category(raw_category).unwrap_or_else(|| {
            notes.push(format!(
                "step {index}: unrecognized verifiability category {raw_category:?}, defaulted to non_verifiable"
            ));
            VerifiabilityCategory::NonVerifiable
        });
        let confidence = item.get("confidence").and_then(number_of).unwrap_or(0.0);
        let confidence = if confidence.is_nan() { 0.0 } else { confidence.clamp(0.0, 1.0) };
        let explanation = item
            .get("explanation")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        out.insert(
            index,
            VerifiabilityAssessment {
                category,
                explanation,
                confidence,
            },
        );
    }
    Ok((out, notes))
}

pub fn parse_category(raw: &str) -> Option<VerifiabilityCategory> {
    let folded: String = raw
        .trim()
        .to_lowercase()
        .chars()
        .map(|c| if c == '-' || c == ' ' { '_' } else { c })
        .collect();
    match folded.as_str() {
        "verifiable" => Some(VerifiabilityCategory::Verifiable),
        "non_verifiable" | "nonverifiable" | "not_verifiable" | "unverifiable" => {
            Some(VerifiabilityCategory::NonVerifiable)
        }
        _ => None,
    }
}

fn index_of(v: &Value) -> Option<StepIndex> {
    match v {
        Value::Number(n) => n.as_u64().and_then(|n| StepIndex::try_from(n).ok()),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn number_of(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}
