//! Shared domain types and the canonical Diagnosis Report encoding.
//!
//! Every type here is a plain immutable value. [`DiagnosisReport::validate`]
//! re-checks all cross-field invariants; [`serialize_report`] and
//! [`parse_report`] are the only sanctioned way in and out of text.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Step ordinal. `0` is the question, `1..=N` are trace sentences.
pub type StepIndex = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invariant violated at `{field}`: {reason}")]
    InvariantViolation { field: String, reason: String },
    #[error("schema error at `{path}`: {reason}")]
    SchemaError { path: String, reason: String },
}

impl ModelError {
    pub(crate) fn invariant(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ModelError::InvariantViolation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

fn ensure(cond: bool, field: impl Into<String>, reason: impl Into<String>) -> Result<(), ModelError> {
    if cond {
        Ok(())
    } else {
        Err(ModelError::invariant(field, reason))
    }
}

/// Functional role of a reasoning step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionTag {
    ProblemSetup,
    PlanGeneration,
    FactRetrieval,
    ActiveComputation,
    ResultConsolidation,
    UncertaintyManagement,
    FinalAnswerEmission,
    SelfChecking,
    Unknown,
}

impl FunctionTag {
    pub const ALL: [FunctionTag; 9] = [
        FunctionTag::ProblemSetup,
        FunctionTag::PlanGeneration,
        FunctionTag::FactRetrieval,
        FunctionTag::ActiveComputation,
        FunctionTag::ResultConsolidation,
        FunctionTag::UncertaintyManagement,
        FunctionTag::FinalAnswerEmission,
        FunctionTag::SelfChecking,
        FunctionTag::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FunctionTag::ProblemSetup => "problem_setup",
            FunctionTag::PlanGeneration => "plan_generation",
            FunctionTag::FactRetrieval => "fact_retrieval",
            FunctionTag::ActiveComputation => "active_computation",
            FunctionTag::ResultConsolidation => "result_consolidation",
            FunctionTag::UncertaintyManagement => "uncertainty_management",
            FunctionTag::FinalAnswerEmission => "final_answer_emission",
            FunctionTag::SelfChecking => "self_checking",
            FunctionTag::Unknown => "unknown",
        }
    }

    /// Lenient lookup for model output: case-insensitive, ignores stray
    /// whitespace and accepts `-` or ` ` in place of `_`.
    pub fn parse_lenient(raw: &str) -> Option<FunctionTag> {
        let normalized: String = raw
            .trim()
            .trim_matches('`')
            .chars()
            .filter_map(|c| match c {
                '-' => Some('_'),
                c if c.is_whitespace() => None,
                c => Some(c.to_ascii_lowercase()),
            })
            .collect();
        FunctionTag::ALL
            .into_iter()
            .find(|tag| tag.as_str() == normalized)
    }
}

impl fmt::Display for FunctionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifiabilityCategory {
    Verifiable,
    NonVerifiable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifiabilityAssessment {
    pub category: VerifiabilityCategory,
    pub explanation: String,
    pub confidence: f64,
}

impl VerifiabilityAssessment {
    pub fn is_verifiable(&self) -> bool {
        self.category == VerifiabilityCategory::Verifiable
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stance {
    Support,
    Refute,
    Irrelevant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceItem {
    pub source: String,
    pub snippet: String,
    pub stance: Stance,
    pub explanation: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactStatus {
    Supported,
    Refuted,
    Conflicting,
    NoEvidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactVerdict {
    pub status: FactStatus,
    pub evidence: Vec<EvidenceItem>,
    pub queries: Vec<String>,
}

impl FactVerdict {
    /// Only clean support escapes the flag; conflicting or absent evidence
    /// is flagged so a human gets to look at it.
    pub fn flagged(&self) -> bool {
        self.status != FactStatus::Supported
    }

    pub fn validate(&self, field: &str) -> Result<(), ModelError> {
        let supports = self.evidence.iter().filter(|e| e.stance == Stance::Support).count();
        let refutes = self.evidence.iter().filter(|e| e.stance == Stance::Refute).count();
        let ok = match self.status {
            FactStatus::Supported => supports >= 1 && refutes == 0,
            FactStatus::Refuted => refutes >= 1 && supports == 0,
            FactStatus::Conflicting => supports >= 1 && refutes >= 1,
            FactStatus::NoEvidence => supports == 0 && refutes == 0,
        };
        ensure(
            ok,
            format!("{field}.status"),
            format!("{:?} inconsistent with {supports} support / {refutes} refute items", self.status),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogicStatus {
    Entailed,
    NotEntailed,
    Contradicted,
    TranslationFailed,
    SolverError,
    Timeout,
}

impl LogicStatus {
    pub fn flagged(self) -> bool {
        matches!(self, LogicStatus::NotEntailed | LogicStatus::Contradicted)
    }

    fn is_decided(self) -> bool {
        matches!(
            self,
            LogicStatus::Entailed | LogicStatus::NotEntailed | LogicStatus::Contradicted
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogicVerdict {
    pub status: LogicStatus,
    pub declarations: Vec<String>,
    pub constraints: Vec<String>,
    pub target_fl: String,
    pub solver_transcript: String,
}

impl LogicVerdict {
    pub fn validate(&self, field: &str) -> Result<(), ModelError> {
        if self.status.is_decided() {
            ensure(
                !self.target_fl.trim().is_empty(),
                format!("{field}.target_fl"),
                "decided verdict needs a target formula",
            )?;
            ensure(
                !self.solver_transcript.trim().is_empty(),
                format!("{field}.solver_transcript"),
                "decided verdict needs a solver transcript",
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReasoningStep {
    pub index: StepIndex,
    pub text: String,
    pub function_tags: Vec<FunctionTag>,
    pub verifiability: Option<VerifiabilityAssessment>,
    pub fact_verdict: Option<FactVerdict>,
    pub logic_verdict: Option<LogicVerdict>,
}

impl ReasoningStep {
    pub fn new(index: StepIndex, text: impl Into<String>) -> Self {
        ReasoningStep {
            index,
            text: text.into(),
            function_tags: vec![FunctionTag::Unknown],
            verifiability: None,
            fact_verdict: None,
            logic_verdict: None,
        }
    }

    pub fn is_verifiable(&self) -> bool {
        self.verifiability.as_ref().is_some_and(|v| v.is_verifiable())
    }

    pub fn has_tag(&self, tag: FunctionTag) -> bool {
        self.function_tags.contains(&tag)
    }

    /// Tag shown when a single label is needed: the first one the model gave.
    pub fn display_tag(&self) -> FunctionTag {
        self.function_tags.first().copied().unwrap_or(FunctionTag::Unknown)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PremiseEdge {
    pub premise: StepIndex,
    pub conclusion: StepIndex,
    pub explanation: String,
}

/// Premise → conclusion DAG over step indices, question at node 0.
///
/// Edges always point forward in index order, so index order is a
/// topological order and the graph cannot contain a cycle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DependencyGraph {
    pub node_count: u32,
    pub edges: Vec<PremiseEdge>,
    pub verifiable_nodes: BTreeSet<StepIndex>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown node {0}")]
pub struct UnknownNode(pub StepIndex);

impl DependencyGraph {
    pub fn empty(step_count: u32) -> Self {
        DependencyGraph {
            node_count: step_count + 1,
            edges: Vec::new(),
            verifiable_nodes: BTreeSet::new(),
        }
    }

    pub fn contains(&self, node: StepIndex) -> bool {
        node < self.node_count
    }

    fn check_node(&self, node: StepIndex) -> Result<(), UnknownNode> {
        if self.contains(node) {
            Ok(())
        } else {
            Err(UnknownNode(node))
        }
    }

    /// Adjacency lists `(premises_of, conclusions_of)` indexed by node.
    pub fn adjacency(&self) -> (Vec<Vec<StepIndex>>, Vec<Vec<StepIndex>>) {
        let n = self.node_count as usize;
        let mut premises = vec![Vec::new(); n];
        let mut conclusions = vec![Vec::new(); n];
        for e in &self.edges {
            premises[e.conclusion as usize].push(e.premise);
            conclusions[e.premise as usize].push(e.conclusion);
        }
        (premises, conclusions)
    }

    pub fn premises_of(&self, node: StepIndex) -> Vec<StepIndex> {
        let mut out: Vec<_> = self
            .edges
            .iter()
            .filter(|e| e.conclusion == node)
            .map(|e| e.premise)
            .collect();
        out.sort_unstable();
        out
    }

    /// Every node that `node` transitively relies on. Excludes `node`.
    pub fn ancestors(&self, node: StepIndex) -> Result<BTreeSet<StepIndex>, UnknownNode> {
        self.check_node(node)?;
        let (premises, _) = self.adjacency();
        Ok(closure(&premises, node))
    }

    /// Every node that transitively relies on `node`. Excludes `node`.
    pub fn descendants(&self, node: StepIndex) -> Result<BTreeSet<StepIndex>, UnknownNode> {
        self.check_node(node)?;
        let (_, conclusions) = self.adjacency();
        Ok(closure(&conclusions, node))
    }

    /// Sorts edges canonically by `(premise, conclusion)`.
    pub fn normalize(&mut self) {
        self.edges.sort_by_key(|e| (e.premise, e.conclusion));
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        ensure(self.node_count >= 1, "graph.node_count", "must include the question node")?;
        for &v in &self.verifiable_nodes {
            ensure(
                v >= 1 && v < self.node_count,
                "graph.verifiable_nodes",
                format!("node {v} outside 1..{}", self.node_count),
            )?;
        }
        let mut seen = BTreeSet::new();
        for (i, e) in self.edges.iter().enumerate() {
            let field = format!("graph.edges[{i}]");
            ensure(
                e.premise != e.conclusion,
                &field,
                format!("step {} cannot be a premise to itself", e.premise),
            )?;
            ensure(
                e.premise < e.conclusion,
                &field,
                format!("forward reference {} -> {}", e.premise, e.conclusion),
            )?;
            ensure(e.conclusion < self.node_count, &field, "conclusion outside graph")?;
            ensure(
                e.premise == 0 || self.verifiable_nodes.contains(&e.premise),
                &field,
                format!("premise {} is not verifiable", e.premise),
            )?;
            ensure(
                self.verifiable_nodes.contains(&e.conclusion),
                &field,
                format!("conclusion {} is not verifiable", e.conclusion),
            )?;
            ensure(
                seen.insert((e.premise, e.conclusion)),
                &field,
                "duplicate edge",
            )?;
        }
        Ok(())
    }
}

fn closure(adj: &[Vec<StepIndex>], start: StepIndex) -> BTreeSet<StepIndex> {
    let mut seen = BTreeSet::new();
    let mut queue: VecDeque<StepIndex> = adj[start as usize].iter().copied().collect();
    while let Some(v) = queue.pop_front() {
        if seen.insert(v) {
            queue.extend(adj[v as usize].iter().copied());
        }
    }
    seen.remove(&start);
    seen
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Factual,
    Logical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorOrigin {
    Core,
    Propagated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorAnnotation {
    pub step: StepIndex,
    pub kind: ErrorKind,
    pub origin: ErrorOrigin,
    pub cause_steps: Vec<StepIndex>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportanceScores {
    pub pagerank: BTreeMap<StepIndex, f64>,
    pub r_depth: BTreeMap<StepIndex, u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionNode {
    pub anchor: StepIndex,
    pub depth: u8,
    #[serde(rename = "abstract")]
    pub summary: String,
    pub function_tag: FunctionTag,
}

pub const MAX_SECTION_DEPTH: u8 = 2;

pub fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub model_id: String,
    pub created_at: DateTime<Utc>,
    pub pipeline_version: String,
    pub fixture_mode: bool,
    /// Robust-default repairs applied to model output during the run.
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosisReport {
    pub report_id: String,
    pub question: String,
    pub steps: Vec<ReasoningStep>,
    pub graph: DependencyGraph,
    pub errors: Vec<ErrorAnnotation>,
    pub sections: Vec<SectionNode>,
    pub importance: ImportanceScores,
    pub provenance: Provenance,
}

impl DiagnosisReport {
    pub fn step(&self, index: StepIndex) -> Option<&ReasoningStep> {
        index
            .checked_sub(1)
            .and_then(|i| self.steps.get(i as usize))
            .filter(|s| s.index == index)
    }

    /// Distinct steps carrying any error annotation.
    pub fn error_steps(&self) -> BTreeSet<StepIndex> {
        self.errors.iter().map(|e| e.step).collect()
    }

    pub fn answer_nodes(&self) -> BTreeSet<StepIndex> {
        self.steps
            .iter()
            .filter(|s| s.has_tag(FunctionTag::FinalAnswerEmission))
            .map(|s| s.index)
            .collect()
    }

    /// Rounds reals to their serialized precision, sorts set-like lists and
    /// stamps the content hash, so that `parse(serialize(r)) == r`.
    pub fn seal(&mut self) -> Result<(), ModelError> {
        self.graph.normalize();
        self.errors.sort_by_key(|e| (e.step, e.kind, e.origin));
        for e in &mut self.errors {
            e.cause_steps.sort_unstable();
            e.cause_steps.dedup();
        }
        for s in &mut self.steps {
            if let Some(v) = &mut s.verifiability {
                v.confidence = round_sig9(v.confidence);
            }
        }
        for v in self.importance.pagerank.values_mut() {
            *v = round_sig9(*v);
        }
        // rounding drift can add up past 1e-9; fold it into the largest score
        let drift = 1.0 - self.importance.pagerank.values().sum::<f64>();
        if let Some(max) = self.importance.pagerank.values_mut().max_by(|a, b| a.total_cmp(b)) {
            *max = round_sig9(*max + drift);
        }
        self.report_id = compute_report_id(self)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.steps.len() as u32;
        for (i, step) in self.steps.iter().enumerate() {
            let field = format!("steps[{i}]");
            ensure(
                step.index == i as u32 + 1,
                format!("{field}.index"),
                format!("expected {}, found {}", i + 1, step.index),
            )?;
            ensure(
                !step.function_tags.is_empty(),
                format!("{field}.function_tags"),
                "at least one tag required",
            )?;
            let distinct: BTreeSet<_> = step.function_tags.iter().collect();
            ensure(
                distinct.len() == step.function_tags.len(),
                format!("{field}.function_tags"),
                "duplicate tag",
            )?;
            ensure(
                !(step.function_tags.len() > 1 && step.has_tag(FunctionTag::Unknown)),
                format!("{field}.function_tags"),
                "`unknown` cannot co-occur with another tag",
            )?;
            if let Some(v) = &step.verifiability {
                ensure(
                    v.confidence.is_finite() && (0.0..=1.0).contains(&v.confidence),
                    format!("{field}.verifiability.confidence"),
                    format!("{} outside [0, 1]", v.confidence),
                )?;
            }
            let verifiable = step.is_verifiable();
            if let Some(f) = &step.fact_verdict {
                ensure(
                    verifiable,
                    format!("{field}.fact_verdict"),
                    "only verifiable steps carry verdicts",
                )?;
                f.validate(&format!("{field}.fact_verdict"))?;
            }
            if let Some(l) = &step.logic_verdict {
                ensure(
                    verifiable,
                    format!("{field}.logic_verdict"),
                    "only verifiable steps carry verdicts",
                )?;
                l.validate(&format!("{field}.logic_verdict"))?;
            }
        }

        ensure(
            self.graph.node_count == n + 1,
            "graph.node_count",
            format!("expected {} for {n} steps", n + 1),
        )?;
        self.graph.validate()?;
        let verifiable: BTreeSet<StepIndex> = self
            .steps
            .iter()
            .filter(|s| s.is_verifiable())
            .map(|s| s.index)
            .collect();
        ensure(
            verifiable == self.graph.verifiable_nodes,
            "graph.verifiable_nodes",
            "must equal the set of verifiable steps",
        )?;

        self.validate_errors()?;
        self.validate_sections()?;
        self.validate_importance()?;
        Ok(())
    }

    fn validate_errors(&self) -> Result<(), ModelError> {
        let n = self.steps.len() as u32;
        let core: BTreeSet<StepIndex> = self
            .errors
            .iter()
            .filter(|e| e.origin == ErrorOrigin::Core)
            .map(|e| e.step)
            .collect();
        let mut seen = BTreeSet::new();
        for (i, e) in self.errors.iter().enumerate() {
            let field = format!("errors[{i}]");
            ensure(
                e.step >= 1 && e.step <= n,
                format!("{field}.step"),
                format!("step {} does not exist", e.step),
            )?;
            ensure(
                seen.insert((e.step, e.kind, e.origin)),
                &field,
                "duplicate annotation",
            )?;
            match e.origin {
                ErrorOrigin::Core => ensure(
                    e.cause_steps.is_empty(),
                    format!("{field}.cause_steps"),
                    "core errors have no causes",
                )?,
                ErrorOrigin::Propagated => {
                    ensure(
                        !core.contains(&e.step),
                        format!("{field}.origin"),
                        "step is both core and propagated",
                    )?;
                    ensure(
                        !e.cause_steps.is_empty(),
                        format!("{field}.cause_steps"),
                        "propagated errors need a core cause",
                    )?;
                    let ancestors = self
                        .graph
                        .ancestors(e.step)
                        .map_err(|u| ModelError::invariant(&field, u.to_string()))?;
                    for c in &e.cause_steps {
                        ensure(
                            core.contains(c) && ancestors.contains(c),
                            format!("{field}.cause_steps"),
                            format!("{c} is not a core ancestor of {}", e.step),
                        )?;
                    }
                }
            }
        }
        Ok(())
    }

    fn validate_sections(&self) -> Result<(), ModelError> {
        let n = self.steps.len() as u32;
        let mut prev: Option<&SectionNode> = None;
        for (i, s) in self.sections.iter().enumerate() {
            let field = format!("sections[{i}]");
            ensure(
                s.anchor >= 1 && s.anchor <= n,
                format!("{field}.anchor"),
                format!("anchor {} does not exist", s.anchor),
            )?;
            ensure(
                s.depth <= MAX_SECTION_DEPTH,
                format!("{field}.depth"),
                format!("depth {} exceeds {MAX_SECTION_DEPTH}", s.depth),
            )?;
            let words = word_count(&s.summary);
            ensure(
                (2..=5).contains(&words),
                format!("{field}.abstract"),
                format!("{words} words, expected 2-5"),
            )?;
            match prev {
                None => ensure(s.depth == 0, format!("{field}.depth"), "first section must be top-level")?,
                Some(p) => {
                    ensure(
                        s.anchor > p.anchor,
                        format!("{field}.anchor"),
                        "anchors must be strictly increasing",
                    )?;
                    ensure(
                        s.depth <= p.depth + 1,
                        format!("{field}.depth"),
                        "child depth must be parent depth + 1",
                    )?;
                }
            }
            prev = Some(s);
        }
        Ok(())
    }

    fn validate_importance(&self) -> Result<(), ModelError> {
        let nodes: BTreeSet<StepIndex> = (0..self.graph.node_count).collect();
        let pr_keys: BTreeSet<StepIndex> = self.importance.pagerank.keys().copied().collect();
        let rd_keys: BTreeSet<StepIndex> = self.importance.r_depth.keys().copied().collect();
        ensure(pr_keys == nodes, "importance.pagerank", "one score per graph node")?;
        ensure(rd_keys == nodes, "importance.r_depth", "one depth per graph node")?;
        let mut sum = 0.0;
        for (k, v) in &self.importance.pagerank {
            ensure(
                v.is_finite() && *v >= 0.0,
                format!("importance.pagerank.{k}"),
                "scores must be finite and non-negative",
            )?;
            sum += v;
        }
        ensure(
            (sum - 1.0).abs() <= 1e-9,
            "importance.pagerank",
            format!("scores sum to {sum}, expected 1"),
        )?;

        let answers = self.answer_nodes();
        let (_, conclusions) = self.graph.adjacency();
        let mut reaches = vec![false; self.graph.node_count as usize];
        for v in (0..self.graph.node_count).rev() {
            reaches[v as usize] = answers.contains(&v)
                || conclusions[v as usize].iter().any(|&c| reaches[c as usize]);
        }
        for (k, d) in &self.importance.r_depth {
            if !reaches[*k as usize] {
                ensure(
                    *d == 0,
                    format!("importance.r_depth.{k}"),
                    "nodes that never feed an answer have depth 0",
                )?;
            }
        }
        Ok(())
    }
}

/// Rounds to 9 significant decimal digits, the precision reals are written at.
pub fn round_sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

fn epoch() -> DateTime<Utc> {
    Utc.timestamp_opt(0, 0).single().expect("epoch is representable")
}

fn round_reals(value: &mut Value) {
    match value {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round_sig9).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_reals),
        Value::Object(map) => map.values_mut().for_each(round_reals),
        _ => {}
    }
}

fn render_canonical(report: &DiagnosisReport) -> Result<String, ModelError> {
    let mut value = serde_json::to_value(report).map_err(|e| ModelError::SchemaError {
        path: String::new(),
        reason: e.to_string(),
    })?;
    round_reals(&mut value);
    let mut text = serde_json::to_string_pretty(&value).map_err(|e| ModelError::SchemaError {
        path: String::new(),
        reason: e.to_string(),
    })?;
    text.push('\n');
    Ok(text)
}

/// Content hash over the canonical text with `report_id` blanked and
/// `created_at` pinned to the epoch.
pub fn compute_report_id(report: &DiagnosisReport) -> Result<String, ModelError> {
    let mut zeroed = report.clone();
    zeroed.report_id = String::new();
    zeroed.provenance.created_at = epoch();
    Ok(crate::sha256_hex(render_canonical(&zeroed)?))
}

/// Canonical text form: sorted keys, reals at 9 significant digits,
/// newline-terminated, with `report_id` recomputed from the content.
pub fn serialize_report(report: &DiagnosisReport) -> Result<String, ModelError> {
    report.validate()?;
    let mut stamped = report.clone();
    stamped.report_id = compute_report_id(report)?;
    render_canonical(&stamped)
}

pub fn parse_report(text: &str) -> Result<DiagnosisReport, ModelError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let report: DiagnosisReport =
        serde_path_to_error::deserialize(de).map_err(|e| ModelError::SchemaError {
            path: e.path().to_string(),
            reason: e.inner().to_string(),
        })?;
    report.validate()?;
    let expected = compute_report_id(&report)?;
    ensure(
        report.report_id == expected,
        "report_id",
        format!("content hash is {expected}"),
    )?;
    Ok(report)
}
