//! Solver-backed check that a step follows from its premises.
//!
//! Each bundle is checked twice: once with the target asserted (does it
//! contradict the premises?) and once with it negated (do the premises force
//! it?). The pair of answers decides the verdict.

pub mod formula;
mod smtlib;
mod solver;

use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::gateway::{extract_json, vars, Gateway, GatewayError, TemplateName};
use crate::model::{LogicStatus, LogicVerdict};

pub use formula::{FormulaError, Symbols};
pub use smtlib::{emit_solver_script, CheckMode};
pub use solver::{solver_key, FixtureSolver, ProcessSolver, SolverAnswer, SolverBackend, SolverError, SolverRun};

pub const DEFAULT_SOLVER_TIMEOUT: Duration = Duration::from_millis(5000);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetStatement {
    pub sentence: String,
    pub formula: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormalBundle {
    pub declarations: Vec<String>,
    pub constraints: Vec<String>,
    pub statements: Vec<String>,
    pub target: TargetStatement,
}

impl FormalBundle {
    /// Checks that every formula parses, is boolean, and only uses declared
    /// symbols.
    pub fn check(&self) -> Result<(), FormulaError> {
        emit_solver_script(self, CheckMode::Entailment).map(|_| ())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LogicError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("translation failed: {0}")]
    TranslationFailed(String),
}

/// Translates the target step and its premises into a checked bundle.
///
/// A bundle that fails to parse or type-check gets exactly one repair
/// round, with the problem appended to the prompt.
pub fn translate_to_fl(
    gateway: &Gateway,
    question: &str,
    premises: &[String],
    context: &str,
    target_step: &str,
    seed_declarations: &[String],
) -> Result<FormalBundle, LogicError> {
    let base = vars([
        ("target_statement", target_step.to_string()),
        ("related_statements", serde_json::to_string_pretty(premises).expect("strings serialize")),
        ("full_reasoning", context.to_string()),
        ("question_context", question.to_string()),
        (
            "declarations_and_constraints",
            serde_json::to_string_pretty(seed_declarations).expect("strings serialize"),
        ),
    ]);
    let mut problem = None;
    for attempt in 0..2 {
        let mut variables = base.clone();
        if let Some(p) = &problem {
            variables.insert(
                "repair_note".to_string(),
                format!(
                    "\nYour previous answer was rejected: {p}\nReturn the complete corrected JSON object, declaring every symbol you use.\n"
                ),
            );
        }
        let text = gateway.complete_template(TemplateName::NlToSymbolic, variables)?;
        match parse_bundle(&text, target_step).and_then(|b| b.check().map(|_| b).map_err(|e| e.to_string())) {
            Ok(bundle) => return Ok(bundle),
            Err(reason) => {
                log::debug!("translation attempt {} rejected: {reason}", attempt + 1);
                problem = Some(reason);
            }
        }
    }
    Err(LogicError::TranslationFailed(problem.unwrap_or_default()))
}

/// Reads the translation JSON. Declarations, constraints and statements may
/// be arrays or newline-separated strings.
pub fn parse_bundle(text: &str, fallback_sentence: &str) -> Result<FormalBundle, String> {
    let value = extract_json(text).map_err(|e| e.to_string())?;
    let Value::Object(map) = value else {
        return Err("expected a JSON object".into());
    };
    let list = |key: &str| -> Vec<String> {
        match map.get(key) {
            Some(Value::Array(items)) => items
                .iter()
                .filter_map(|v| match v {
                    Value::String(s) => Some(s.trim().to_string()),
                    _ => None,
                })
                .filter(|s| !s.is_empty())
                .collect(),
            Some(Value::String(s)) => s.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect(),
            _ => Vec::new(),
        }
    };
    let (sentence, formula) = match map.get("target_statement") {
        Some(Value::Object(t)) => {
            let get = |k: &str| t.get(k).and_then(Value::as_str).map(str::trim).map(String::from);
            (
                get("sentence").unwrap_or_else(|| fallback_sentence.to_string()),
                get("FL").or_else(|| get("fl")).or_else(|| get("formula")).unwrap_or_default(),
            )
        }
        Some(Value::String(s)) => (fallback_sentence.to_string(), s.trim().to_string()),
        Some(Value::Array(items)) => (
            fallback_sentence.to_string(),
            items.first().and_then(Value::as_str).unwrap_or_default().trim().to_string(),
        ),
        _ => return Err("missing target_statement".into()),
    };
    if formula.is_empty() {
        return Err("target_statement has no FL formula".into());
    }
    Ok(FormalBundle {
        declarations: list("declarations"),
        constraints: list("constraints"),
        statements: list("statements"),
        target: TargetStatement { sentence, formula },
    })
}

/// Status from the two solver answers, plus a note when the answer was not
/// decisive.
pub fn judge_entailment(consistency: SolverAnswer, entailment: SolverAnswer) -> (LogicStatus, Option<&'static str>) {
    use SolverAnswer::*;
    match (consistency, entailment) {
        (Unsat, _) => (LogicStatus::Contradicted, None),
        (_, Unsat) => (LogicStatus::Entailed, None),
        (Sat, Sat) => (LogicStatus::NotEntailed, None),
        _ => (
            LogicStatus::NotEntailed,
            Some("solver answered unknown; flagged for human review"),
        ),
    }
}

pub struct LogicChecker {
    solver: Arc<dyn SolverBackend>,
    timeout: Duration,
}

impl LogicChecker {
    pub fn new(solver: Arc<dyn SolverBackend>) -> Self {
        LogicChecker {
            solver,
            timeout: DEFAULT_SOLVER_TIMEOUT,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Runs both checks concurrently and folds them into a verdict.
    pub fn check_bundle(&self, bundle: &FormalBundle) -> LogicVerdict {
        let mut verdict = LogicVerdict {
            status: LogicStatus::TranslationFailed,
            declarations: bundle.declarations.clone(),
            constraints: bundle.constraints.iter().chain(&bundle.statements).cloned().collect(),
            target_fl: bundle.target.formula.clone(),
            solver_transcript: String::new(),
        };
        let scripts = [CheckMode::Consistency, CheckMode::Entailment].map(|m| emit_solver_script(bundle, m));
        let [Ok(consistency_script), Ok(entailment_script)] = &scripts else {
            let err = scripts.iter().find_map(|s| s.as_ref().err()).expect("one script failed");
            verdict.solver_transcript = format!("; lowering failed: {err}\n");
            return verdict;
        };
        let (consistency, entailment) = thread::scope(|s| {
            let c = s.spawn(|| self.solver.run(consistency_script, self.timeout));
            let e = self.solver.run(entailment_script, self.timeout);
            (c.join().expect("solver thread"), e)
        });

        let mut transcript = String::new();
        for (script, result) in [(consistency_script, &consistency), (entailment_script, &entailment)] {
            transcript.push_str(script);
            transcript.push_str(&match result {
                Ok(run) => format!("; => {}\n", run.output.trim()),
                Err(e) => format!("; => {e}\n"),
            });
        }
        let answer = |r: &Result<SolverRun, SolverError>| r.as_ref().ok().map(|run| run.answer);
        let (status, note) = match (answer(&consistency), answer(&entailment)) {
            (Some(SolverAnswer::Unsat), _) => (LogicStatus::Contradicted, None),
            (_, Some(SolverAnswer::Unsat)) => (LogicStatus::Entailed, None),
            (Some(c), Some(e)) => judge_entailment(c, e),
            _ if [&consistency, &entailment].iter().any(|r| matches!(r, Err(SolverError::Timeout(_)))) => {
                (LogicStatus::Timeout, None)
            }
            _ => (LogicStatus::SolverError, None),
        };
        if let Some(note) = note {
            transcript.push_str(&format!("; note: {note}\n"));
        }
        verdict.status = status;
        verdict.solver_transcript = transcript;
        verdict
    }

    /// Translates and checks one step. Translation failures become a
    /// `TranslationFailed` verdict rather than an error.
    pub fn verify_step(
        &self,
        gateway: &Gateway,
        question: &str,
        premises: &[String],
        context: &str,
        target_step: &str,
        seed_declarations: &[String],
    ) -> Result<LogicVerdict, GatewayError> {
        match translate_to_fl(gateway, question, premises, context, target_step, seed_declarations) {
            Ok(bundle) => Ok(self.check_bundle(&bundle)),
            Err(LogicError::Gateway(e)) => Err(e),
            Err(LogicError::TranslationFailed(reason)) => Ok(LogicVerdict {
                status: LogicStatus::TranslationFailed,
                declarations: Vec::new(),
                constraints: Vec::new(),
                target_fl: String::new(),
                solver_transcript: format!("; translation failed: {reason}\n"),
            }),
        }
    }
}
