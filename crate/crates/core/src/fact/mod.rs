//! Retrieval-backed factual verification of single steps.
//!
//! A step is decomposed into search queries, evidence is pooled across all
//! queries, each evidence item gets a stance, and stances are aggregated.

mod search;

use serde_json::Value;
use thiserror::Error;

use crate::gateway::{extract_json, vars, Gateway, GatewayError, TemplateName};
use crate::model::{EvidenceItem, FactStatus, FactVerdict, Stance};

pub use search::{parse_organic, search_key, SearchBackend, SearchClient, SearchResult, SerperBackend, StaticSearch, DEFAULT_TOP_K};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("search backend returned status {status}: {body}")]
    Backend { status: u16, body: String },
    #[error("no recorded search results for key {0}")]
    FixtureMiss(String),
}

/// Splits a step into atomic search queries.
///
/// Falls back to the step text itself when the model output is not a
/// non-empty list of strings.
pub fn decompose(gateway: &Gateway, step_text: &str) -> Result<Vec<String>, GatewayError> {
    let text = gateway.complete_template(
        TemplateName::ClaimDecomposition,
        vars([("STEP_TEXT", step_text.to_string())]),
    )?;
    Ok(parse_queries(&text).unwrap_or_else(|| vec![step_text.trim().to_string()]))
}

fn parse_queries(text: &str) -> Option<Vec<String>> {
    let value = extract_json(text).ok()?;
    let items = match value {
        Value::Array(items) => items,
        Value::Object(map) => map.into_iter().find_map(|(_, v)| match v {
            Value::Array(items) => Some(items),
            _ => None,
        })?,
        _ => return None,
    };
    let mut queries: Vec<String> = Vec::new();
    for q in items.iter().filter_map(Value::as_str).map(str::trim).filter(|q| !q.is_empty()) {
        if !queries.iter().any(|existing| existing == q) {
            queries.push(q.to_string());
        }
    }
    (!queries.is_empty()).then_some(queries)
}

/// One evidence item per result, in result order.
///
/// No results means no model call. Items the model skipped or labeled with
/// an unknown stance count as irrelevant.
pub fn judge_stances(
    gateway: &Gateway,
    claim: &str,
    results: &[SearchResult],
) -> Result<Vec<EvidenceItem>, GatewayError> {
    if results.is_empty() {
        return Ok(Vec::new());
    }
    let listing = results
        .iter()
        .enumerate()
        .map(|(i, r)| format!("[{}] {} ({})\n{}", i + 1, r.title, r.url, r.snippet))
        .collect::<Vec<_>>()
        .join("\n\n");
    let text = gateway.complete_template(
        TemplateName::StanceJudgment,
        vars([("CLAIM", claim.to_string()), ("EVIDENCE", listing)]),
    )?;
    let judged = parse_stances(&text);
    Ok(results
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let (stance, explanation) = judged
                .iter()
                .find(|(n, _, _)| *n == i + 1)
                .map(|(_, s, e)| (*s, e.clone()))
                .unwrap_or((Stance::Irrelevant, String::from("no judgment returned")));
            EvidenceItem {
                source: r.url.clone(),
                snippet: r.snippet.clone(),
                stance,
                explanation,
            }
        })
        .collect())
}

fn parse_stances(text: &str) -> Vec<(usize, Stance, String)> {
    let Ok(Value::Array(items)) = extract_json(text) else {
        return Vec::new();
    };
    items
        .iter()
        .filter_map(|item| {
            let n = match item.get("result")? {
                Value::Number(n) => n.as_u64()? as usize,
                Value::String(s) => s.trim().trim_matches(['[', ']']).parse().ok()?,
                _ => return None,
            };
            let stance = item.get("stance").and_then(Value::as_str).map_or(Stance::Irrelevant, parse_stance);
            let explanation = item
                .get("explanation")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string();
            Some((n, stance, explanation))
        })
        .collect()
}

fn parse_stance(raw: &str) -> Stance {
    match raw.trim().to_lowercase().as_str() {
        "support" | "supports" | "supported" | "supporting" => Stance::Support,
        "refute" | "refutes" | "refuted" | "refuting" | "contradict" | "contradicts" => Stance::Refute,
        _ => Stance::Irrelevant,
    }
}

/// Order-invariant stance aggregation. Irrelevant items never matter.
pub fn aggregate(evidence: Vec<EvidenceItem>, queries: Vec<String>) -> FactVerdict {
    let supports = evidence.iter().any(|e| e.stance == Stance::Support);
    let refutes = evidence.iter().any(|e| e.stance == Stance::Refute);
    let status = match (supports, refutes) {
        (true, true) => FactStatus::Conflicting,
        (false, true) => FactStatus::Refuted,
        (true, false) => FactStatus::Supported,
        (false, false) => FactStatus::NoEvidence,
    };
    FactVerdict {
        status,
        evidence,
        queries,
    }
}

/// Full decompose, search, judge and aggregate path for one step.
pub fn verify_step(gateway: &Gateway, search: &SearchClient, step_text: &str) -> Result<FactVerdict, FactError> {
    let queries = decompose(gateway, step_text)?;
    let mut pooled: Vec<SearchResult> = Vec::new();
    for query in &queries {
        for result in search.search(query)? {
            if !pooled.iter().any(|p| p.url == result.url && p.snippet == result.snippet) {
                pooled.push(result);
            }
        }
    }
    let evidence = judge_stances(gateway, step_text, &pooled)?;
    Ok(aggregate(evidence, queries))
}
