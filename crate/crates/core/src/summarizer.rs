//! Hierarchical section outline over the steps of a trace.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value};

use crate::gateway::{extract_json, vars, Gateway, GatewayError, TemplateName};
use crate::model::{FunctionTag, ReasoningStep, SectionNode, StepIndex, MAX_SECTION_DEPTH};

pub const OPENING_ABSTRACT: &str = "Opening reasoning";
pub const FALLBACK_ABSTRACT: &str = "Whole reasoning trace";
const MAX_ABSTRACT_WORDS: usize = 5;
const MIN_ABSTRACT_WORDS: usize = 2;

/// Sections plus notes about any repairs applied to the model output.
#[derive(Debug, Clone, PartialEq)]
pub struct Outline {
    pub sections: Vec<SectionNode>,
    pub notes: Vec<String>,
}

/// One completion over the tagged steps, then grammar repair.
///
/// Output that is not a keyed JSON object falls back to a single section.
pub fn build_sections(gateway: &Gateway, steps: &[ReasoningStep]) -> Result<Outline, GatewayError> {
    if steps.is_empty() {
        return Ok(Outline { sections: Vec::new(), notes: Vec::new() });
    }
    let input: Map<String, Value> = steps
        .iter()
        .map(|s| {
            (
                s.index.to_string(),
                json!({"sentence": s.text, "function_tag": s.display_tag().as_str()}),
            )
        })
        .collect();
    let text = gateway.complete_template(
        TemplateName::SectionStructuring,
        vars([("FULL_COT_STEPS", serde_json::to_string_pretty(&Value::Object(input)).expect("serializes"))]),
    )?;
    Ok(parse_sections(&text, steps))
}

/// Parses and repairs a section-structuring response.
pub fn parse_sections(text: &str, steps: &[ReasoningStep]) -> Outline {
    let n = steps.len() as StepIndex;
    let mut notes = Vec::new();
    let map = match extract_json(text) {
        Ok(Value::Object(map)) => map,
        _ => {
            notes.push("section outline unparseable; using a single section".to_string());
            return Outline { sections: fallback(steps), notes };
        }
    };
    let mut raw: BTreeMap<StepIndex, (i64, String, Option<FunctionTag>)> = BTreeMap::new();
    for (key, entry) in map {
        let Ok(anchor) = key.trim().parse::<StepIndex>() else { continue };
        if anchor == 0 || anchor > n {
            notes.push(format!("section anchor {anchor} outside 1..={n} dropped"));
            continue;
        }
        let depth = entry.get("depth").and_then(|d| d.as_i64().or_else(|| d.as_str()?.trim().parse().ok())).unwrap_or(0);
        let summary = entry.get("abstract").and_then(Value::as_str).unwrap_or_default().to_string();
        let tag = entry.get("function_tag").and_then(|t| match t {
            Value::String(s) => FunctionTag::parse_lenient(s),
            Value::Array(items) => items.iter().filter_map(Value::as_str).find_map(FunctionTag::parse_lenient),
            _ => None,
        });
        raw.insert(anchor, (depth, summary, tag));
    }
    if raw.is_empty() {
        notes.push("section outline empty; using a single section".to_string());
        return Outline { sections: fallback(steps), notes };
    }
    if let std::collections::btree_map::Entry::Vacant(slot) = raw.entry(1) {
        slot.insert((0, OPENING_ABSTRACT.to_string(), None));
        notes.push("synthetic opening section added at step 1".to_string());
    }

    let mut sections: Vec<SectionNode> = Vec::new();
    for (anchor, (depth, summary, tag)) in raw {
        let mut depth = depth.clamp(0, i64::from(MAX_SECTION_DEPTH)) as u8;
        let ceiling = sections.last().map_or(0, |prev| prev.depth + 1);
        if depth > ceiling {
            notes.push(format!("section {anchor}: depth {depth} lifted to {ceiling}"));
            depth = ceiling;
        }
        let summary = fit_abstract(&summary, anchor, &mut notes);
        let function_tag = tag.unwrap_or_else(|| steps[anchor as usize - 1].display_tag());
        sections.push(SectionNode { anchor, depth, summary, function_tag });
    }
    Outline { sections, notes }
}

fn fit_abstract(raw: &str, anchor: StepIndex, notes: &mut Vec<String>) -> String {
    let words: Vec<&str> = raw.split_whitespace().collect();
    if words.len() > MAX_ABSTRACT_WORDS {
        notes.push(format!("section {anchor}: abstract trimmed to {MAX_ABSTRACT_WORDS} words"));
        return words[..MAX_ABSTRACT_WORDS].join(" ");
    }
    if words.len() < MIN_ABSTRACT_WORDS {
        notes.push(format!("section {anchor}: abstract padded to {MIN_ABSTRACT_WORDS} words"));
        return match words.first() {
            Some(w) => format!("{w} section"),
            None => format!("Section {anchor}"),
        };
    }
    words.join(" ")
}

fn fallback(steps: &[ReasoningStep]) -> Vec<SectionNode> {
    vec![SectionNode {
        anchor: 1,
        depth: 0,
        summary: FALLBACK_ABSTRACT.to_string(),
        function_tag: steps.first().map_or(FunctionTag::Unknown, ReasoningStep::display_tag),
    }]
}

/// Section anchor owning each step in `1..=step_count`.
///
/// A step belongs to the most recent section at or before it; sections are
/// anchor-started intervals, so nesting only affects where a section's
/// range ends, never which section a step starts in.
pub fn assign_steps(sections: &[SectionNode], step_count: u32) -> BTreeMap<StepIndex, StepIndex> {
    let mut out = BTreeMap::new();
    let mut stack: Vec<&SectionNode> = Vec::new();
    let mut next = sections.iter().peekable();
    for step in 1..=step_count {
        while let Some(section) = next.next_if(|s| s.anchor <= step) {
            // a new anchor closes open sections at equal or greater depth
            while stack.last().is_some_and(|open| open.depth >= section.depth) {
                stack.pop();
            }
            stack.push(section);
        }
        if let Some(owner) = stack.last() {
            out.insert(step, owner.anchor);
        }
    }
    out
}
