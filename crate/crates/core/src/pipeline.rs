//! End-to-end orchestration: trace text in, sealed report out.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{DateTime, TimeZone, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::annotate::{assess_verifiability, classify_steps, AnnotateError, WindowConfig};
use crate::diagnostics::{annotate_errors, pagerank, r_depth};
use crate::fact::{self, FactError, SearchClient};
use crate::fixture::write_atomic;
use crate::gateway::{Gateway, GatewayError};
use crate::logic::LogicChecker;
use crate::model::{
    DependencyGraph, DiagnosisReport, FactVerdict, ImportanceScores, LogicVerdict, ModelError, Provenance,
    ReasoningStep, SectionNode, StepIndex,
};
use crate::premise::{build_graph, identify_all_premises};
use crate::segment::segment;
use crate::summarizer::build_sections;

pub const PIPELINE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseOptions {
    pub skip_fact: bool,
    pub skip_logic: bool,
    /// Few-shot block for premise identification; the built-in one when unset.
    pub premise_fewshot: Option<String>,
    /// Declarations handed to every translation request.
    pub seed_declarations: Vec<String>,
    #[serde(skip)]
    pub window: WindowConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Segment,
    Classify,
    Verifiability,
    Premises,
    Fact,
    Logic,
    Diagnostics,
    Summarize,
    Assemble,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Segment => "segment",
            Stage::Classify => "classify",
            Stage::Verifiability => "verifiability",
            Stage::Premises => "premises",
            Stage::Fact => "fact",
            Stage::Logic => "logic",
            Stage::Diagnostics => "diagnostics",
            Stage::Summarize => "summarize",
            Stage::Assemble => "assemble",
        };
        f.write_str(name)
    }
}

/// Whether a failure came from an external backend or from the pipeline
/// itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Stage,
    Backend,
}

#[derive(Debug, Error)]
#[error("{stage} stage failed: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub kind: FailureKind,
    pub message: String,
    /// Everything computed before the failure, for debugging.
    pub partial: Value,
}

impl PipelineError {
    /// Writes the partial artifact to `<dir>/failed/<stamp>-<stage>.json`.
    pub fn save_partial(&self, dir: &Path) -> io::Result<PathBuf> {
        let failed = dir.join("failed");
        fs::create_dir_all(&failed)?;
        let stamp = Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
        let path = failed.join(format!("{stamp}-{}.json", self.stage));
        let body = json!({
            "stage": self.stage,
            "kind": self.kind,
            "message": self.message,
            "partial": self.partial,
        });
        let mut text = serde_json::to_string_pretty(&body).expect("value serializes");
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

fn gateway_kind(e: &GatewayError) -> FailureKind {
    match e {
        GatewayError::MissingVariable(_) | GatewayError::InvalidRequest(_) => FailureKind::Stage,
        GatewayError::FixtureMiss(_)
        | GatewayError::BackendError { .. }
        | GatewayError::RateLimited
        | GatewayError::Store(_) => FailureKind::Backend,
    }
}

fn fact_kind(e: &FactError) -> FailureKind {
    match e {
        FactError::Gateway(g) => gateway_kind(g),
        FactError::Backend { .. } | FactError::FixtureMiss(_) => FailureKind::Backend,
    }
}

fn annotate_kind(e: &AnnotateError) -> FailureKind {
    match e {
        AnnotateError::Gateway(g) => gateway_kind(g),
        _ => FailureKind::Stage,
    }
}

/// Stable hash of a diagnose request, used to reject duplicate runs.
pub fn input_key(question: &str, trace: &str, options: &DiagnoseOptions) -> String {
    let options = serde_json::to_string(options).expect("options serialize");
    crate::sha256_hex(format!("{question}\0{trace}\0{options}"))
}

/// Computes errors and importance for fully annotated steps, then seals the
/// report.
pub fn assemble_report(
    question: &str,
    steps: Vec<ReasoningStep>,
    graph: DependencyGraph,
    sections: Vec<SectionNode>,
    provenance: Provenance,
) -> Result<DiagnosisReport, PipelineError> {
    let fail = |stage, message: String| PipelineError {
        stage,
        kind: FailureKind::Stage,
        message,
        partial: Value::Null,
    };
    let errors = annotate_errors(&steps, &graph);
    let pagerank = pagerank(&graph).map_err(|e| fail(Stage::Diagnostics, e.to_string()))?;
    let answers: BTreeSet<StepIndex> = steps
        .iter()
        .filter(|s| s.has_tag(crate::model::FunctionTag::FinalAnswerEmission))
        .map(|s| s.index)
        .collect();
    let r_depth = r_depth(&graph, &answers);
    let mut report = DiagnosisReport {
        report_id: String::new(),
        question: question.to_string(),
        steps,
        graph,
        errors,
        sections,
        importance: ImportanceScores { pagerank, r_depth },
        provenance,
    };
    let check = |r: Result<(), ModelError>| r.map_err(|e| fail(Stage::Assemble, e.to_string()));
    check(report.seal())?;
    check(report.validate())?;
    Ok(report)
}

pub struct Pipeline {
    gateway: Gateway,
    search: Option<SearchClient>,
    logic: Option<LogicChecker>,
    created_at: Option<DateTime<Utc>>,
}

impl Pipeline {
    pub fn new(gateway: Gateway) -> Self {
        Pipeline {
            gateway,
            search: None,
            logic: None,
            created_at: None,
        }
    }

    pub fn with_search(mut self, search: SearchClient) -> Self {
        self.search = Some(search);
        self
    }

    pub fn with_logic(mut self, logic: LogicChecker) -> Self {
        self.logic = Some(logic);
        self
    }

    /// Pins `provenance.created_at`. Replay runs default to the Unix epoch
    /// so that their output is byte-identical.
    pub fn with_created_at(mut self, at: DateTime<Utc>) -> Self {
        self.created_at = Some(at);
        self
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn diagnose(
        &self,
        question: &str,
        trace: &str,
        options: &DiagnoseOptions,
    ) -> Result<DiagnosisReport, PipelineError> {
        let mut run = Run {
            question,
            steps: Vec::new(),
            graph: None,
            notes: Vec::new(),
        };

        let texts = run.timed(Stage::Segment, || Ok(segment(trace)))?;
        if texts.is_empty() {
            return Err(run.fail(Stage::Segment, FailureKind::Stage, "trace contains no sentences".into()));
        }
        run.steps = texts
            .iter()
            .enumerate()
            .map(|(i, t)| ReasoningStep::new(i as StepIndex + 1, t.clone()))
            .collect();

        let tags = run.timed(Stage::Classify, || {
            classify_steps(&self.gateway, question, &texts, options.window).map_err(|e| (annotate_kind(&e), e.to_string()))
        })?;
        let verifiability = run.timed(Stage::Verifiability, || {
            assess_verifiability(&self.gateway, &texts, options.window).map_err(|e| (annotate_kind(&e), e.to_string()))
        })?;
        run.notes.extend(tags.notes);
        run.notes.extend(verifiability.notes);
        let mut tags = tags.by_step;
        let mut assessments = verifiability.by_step;
        for step in &mut run.steps {
            if let Some(t) = tags.remove(&step.index) {
                step.function_tags = t;
            }
            step.verifiability = assessments.remove(&step.index);
        }

        let premises = run.timed(Stage::Premises, || {
            let by_step = identify_all_premises(&self.gateway, question, &run.steps, options.premise_fewshot.as_deref())
                .map_err(|e| (gateway_kind(&e), e.to_string()))?;
            let graph = build_graph(&run.steps, &by_step).map_err(|e| (FailureKind::Stage, e.to_string()))?;
            Ok((by_step, graph))
        })?;
        let (premises, graph) = premises;
        run.graph = Some(graph.clone());

        if !options.skip_fact {
            let verdicts = run.timed(Stage::Fact, || self.fact_stage(&run.steps))?;
            for step in &mut run.steps {
                step.fact_verdict = verdicts.get(&step.index).cloned();
            }
        }
        if !options.skip_logic {
            let verdicts = run.timed(Stage::Logic, || self.logic_stage(question, &run.steps, &premises, options))?;
            for step in &mut run.steps {
                step.logic_verdict = verdicts.get(&step.index).cloned();
            }
        }

        let outline = run.timed(Stage::Summarize, || {
            build_sections(&self.gateway, &run.steps).map_err(|e| (gateway_kind(&e), e.to_string()))
        })?;
        run.notes.extend(outline.notes);

        let fixture_mode = self.gateway.is_replay();
        let created_at = self.created_at.unwrap_or_else(|| {
            if fixture_mode {
                Utc.timestamp_opt(0, 0).single().expect("epoch")
            } else {
                Utc::now()
            }
        });
        let provenance = Provenance {
            model_id: self.gateway.config().model_id.clone(),
            created_at,
            pipeline_version: PIPELINE_VERSION.to_string(),
            fixture_mode,
            notes: run.notes.clone(),
        };
        let started = Instant::now();
        let partial = run.partial();
        let report = assemble_report(question, run.steps, graph, outline.sections, provenance).map_err(|mut e| {
            e.partial = partial;
            e
        })?;
        log::info!("stage diagnostics finished in {} ms", started.elapsed().as_millis());
        Ok(report)
    }

    /// Fact verdicts for every verifiable step. Never consults the solver.
    fn fact_stage(&self, steps: &[ReasoningStep]) -> Result<BTreeMap<StepIndex, FactVerdict>, (FailureKind, String)> {
        let Some(search) = &self.search else {
            return Err((FailureKind::Stage, "no search backend configured".into()));
        };
        steps
            .par_iter()
            .filter(|s| s.is_verifiable())
            .map(|s| {
                fact::verify_step(&self.gateway, search, &s.text)
                    .map(|v| (s.index, v))
                    .map_err(|e| (fact_kind(&e), format!("step {}: {e}", s.index)))
            })
            .collect()
    }

    /// Logic verdicts for verifiable steps that have at least one premise.
    /// Never consults retrieved evidence.
    fn logic_stage(
        &self,
        question: &str,
        steps: &[ReasoningStep],
        premises: &BTreeMap<StepIndex, Vec<(StepIndex, String)>>,
        options: &DiagnoseOptions,
    ) -> Result<BTreeMap<StepIndex, LogicVerdict>, (FailureKind, String)> {
        let Some(checker) = &self.logic else {
            return Err((FailureKind::Stage, "no solver configured".into()));
        };
        let text_of = |i: StepIndex| -> &str {
            if i == 0 {
                question
            } else {
                &steps[i as usize - 1].text
            }
        };
        premises
            .par_iter()
            .filter(|(_, p)| !p.is_empty())
            .map(|(&target, p)| {
                let mut ids: Vec<StepIndex> = p.iter().map(|(i, _)| *i).collect();
                ids.sort_unstable();
                ids.dedup();
                let premise_texts: Vec<String> = ids.iter().map(|&i| text_of(i).to_string()).collect();
                let context = steps[..target as usize - 1]
                    .iter()
                    .map(|s| format!("Step {}: {}", s.index, s.text))
                    .collect::<Vec<_>>()
                    .join("\n");
                checker
                    .verify_step(
                        &self.gateway,
                        question,
                        &premise_texts,
                        &context,
                        text_of(target),
                        &options.seed_declarations,
                    )
                    .map(|v| (target, v))
                    .map_err(|e| (gateway_kind(&e), format!("step {target}: {e}")))
            })
            .collect()
    }
}

/// Mutable state of one diagnose run, kept so a failure can dump it.
struct Run<'a> {
    question: &'a str,
    steps: Vec<ReasoningStep>,
    graph: Option<DependencyGraph>,
    notes: Vec<String>,
}

impl Run<'_> {
    fn partial(&self) -> Value {
        json!({
            "question": self.question,
            "steps": self.steps,
            "graph": self.graph,
            "notes": self.notes,
        })
    }

    fn fail(&self, stage: Stage, kind: FailureKind, message: String) -> PipelineError {
        PipelineError {
            stage,
            kind,
            message,
            partial: self.partial(),
        }
    }

    fn timed<T>(
        &self,
        stage: Stage,
        f: impl FnOnce() -> Result<T, (FailureKind, String)>,
    ) -> Result<T, PipelineError> {
        let started = Instant::now();
        let out = f();
        let ms = started.elapsed().as_millis();
        match out {
            Ok(v) => {
                log::info!("stage {stage} finished in {ms} ms");
                Ok(v)
            }
            Err((kind, message)) => {
                log::error!("stage {stage} failed after {ms} ms: {message}");
                Err(self.fail(stage, kind, message))
            }
        }
    }
}
