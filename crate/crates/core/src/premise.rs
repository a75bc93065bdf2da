//! Premise identification and dependency-graph assembly.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;

use crate::gateway::{vars, Gateway, GatewayError, TemplateName, PREMISE_FEWSHOT};
use crate::model::{DependencyGraph, ModelError, PremiseEdge, ReasoningStep, StepIndex, UnknownNode};

static PREMISE_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^[\s\-*•>#]*(?:\*\*)?\s*[Ss]tep\s+(\d+)\s*(?:\*\*)?\s*:\s*(?:\*\*)?\s*(.*?)\s*$")
        .expect("valid regex")
});

/// `Step <n>: <explanation>` lines, first occurrence of each index kept.
pub fn parse_premise_lines(text: &str) -> Vec<(StepIndex, String)> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for line in text.lines() {
        let Some(cap) = PREMISE_LINE.captures(line) else {
            continue;
        };
        let Ok(index) = cap[1].parse::<StepIndex>() else {
            continue;
        };
        if seen.insert(index) {
            out.push((index, cap[2].to_string()));
        }
    }
    out
}

/// Asks for the premises of `target` given every earlier step verbatim.
///
/// Returned indices are restricted to the question (0) and verifiable steps
/// before `target`; anything else is dropped with a warning.
pub fn identify_premises(
    gateway: &Gateway,
    question: &str,
    steps: &[ReasoningStep],
    target: StepIndex,
    fewshot: &str,
) -> Result<Vec<(StepIndex, String)>, GatewayError> {
    let Some(target_step) = steps.iter().find(|s| s.index == target) else {
        return Ok(Vec::new());
    };
    let context = steps
        .iter()
        .filter(|s| s.index < target)
        .map(|s| format!("Step {}: {}", s.index, s.text))
        .collect::<Vec<_>>()
        .join("\n");
    let text = gateway.complete_template(
        TemplateName::PremiseTree,
        vars([
            ("TASK_QUESTION", question.to_string()),
            ("COT_CONTEXT", context),
            ("COT_STEP", format!("Step {}: {}", target, target_step.text)),
            ("fewshot_template", fewshot.to_string()),
        ]),
    )?;
    let allowed: BTreeSet<StepIndex> = std::iter::once(0)
        .chain(steps.iter().filter(|s| s.index < target && s.is_verifiable()).map(|s| s.index))
        .collect();
    Ok(parse_premise_lines(&text)
        .into_iter()
        .filter(|(index, _)| {
            let keep = allowed.contains(index);
            if !keep {
                log::warn!("step {target}: dropping premise reference to step {index}");
            }
            keep
        })
        .collect())
}

/// Runs [`identify_premises`] for every verifiable step concurrently.
pub fn identify_all_premises(
    gateway: &Gateway,
    question: &str,
    steps: &[ReasoningStep],
    fewshot: Option<&str>,
) -> Result<BTreeMap<StepIndex, Vec<(StepIndex, String)>>, GatewayError> {
    let fewshot = fewshot.unwrap_or(PREMISE_FEWSHOT);
    steps
        .par_iter()
        .filter(|s| s.is_verifiable())
        .map(|s| identify_premises(gateway, question, steps, s.index, fewshot).map(|p| (s.index, p)))
        .collect()
}

/// Assembles the validated dependency graph.
pub fn build_graph(
    steps: &[ReasoningStep],
    premises_by_step: &BTreeMap<StepIndex, Vec<(StepIndex, String)>>,
) -> Result<DependencyGraph, ModelError> {
    let mut graph = DependencyGraph::empty(steps.len() as u32);
    graph.verifiable_nodes = steps.iter().filter(|s| s.is_verifiable()).map(|s| s.index).collect();
    for (&conclusion, premises) in premises_by_step {
        for (premise, explanation) in premises {
            if graph.edges.iter().any(|e| e.premise == *premise && e.conclusion == conclusion) {
                continue;
            }
            graph.edges.push(PremiseEdge {
                premise: *premise,
                conclusion,
                explanation: explanation.clone(),
            });
        }
    }
    graph.normalize();
    graph.validate()?;
    Ok(graph)
}

pub fn ancestors(graph: &DependencyGraph, node: StepIndex) -> Result<BTreeSet<StepIndex>, UnknownNode> {
    graph.ancestors(node)
}

pub fn descendants(graph: &DependencyGraph, node: StepIndex) -> Result<BTreeSet<StepIndex>, UnknownNode> {
    graph.descendants(node)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::gateway::{GatewayConfig, ScriptedBackend};
    use crate::model::{VerifiabilityAssessment, VerifiabilityCategory};

    fn steps(verifiable: &[StepIndex], n: u32) -> Vec<ReasoningStep> {
        (1..=n)
            .map(|i| {
                let mut s = ReasoningStep::new(i, format!("step {i}"));
                s.verifiability = Some(VerifiabilityAssessment {
                    category: if verifiable.contains(&i) {
                        VerifiabilityCategory::Verifiable
                    } else {
                        VerifiabilityCategory::NonVerifiable
                    },
                    explanation: String::new(),
                    confidence: 1.0,
                });
                s
            })
            .collect()
    }

    fn scripted(reply: &'static str) -> Gateway {
        Gateway::live(Arc::new(ScriptedBackend::new(move |_| Ok(reply.to_string()))), GatewayConfig::default())
    }

    #[test]
    fn line_grammar() {
        let parsed = parse_premise_lines("Step 0: uses the question\nStep 2: gives k");
        assert_eq!(parsed, vec![(0, "uses the question".into()), (2, "gives k".into())]);
        assert!(parse_premise_lines("I think Step 2 matters").is_empty());
        assert_eq!(parse_premise_lines("Step 2: a\nStep 2: b"), vec![(2, "a".into())]);
        assert_eq!(
            parse_premise_lines("  - **Step 3:** provides the year"),
            vec![(3, "provides the year".into())]
        );
    }

    #[test]
    fn premises_for_target_five() {
        let gw = scripted("Step 0: provides the target year 2025\nStep 3: provides the launch year");
        let out = identify_premises(&gw, "Q", &steps(&[3, 4, 5], 5), 5, "").unwrap();
        assert_eq!(out.iter().map(|p| p.0).collect::<Vec<_>>(), vec![0, 3]);
    }

    #[test]
    fn self_forward_and_non_verifiable_references_dropped() {
        let s = steps(&[3, 5], 9);
        assert!(identify_premises(&scripted("Step 5: restates itself"), "Q", &s, 5, "").unwrap().is_empty());
        assert!(identify_premises(&scripted("Step 9: later result"), "Q", &s, 5, "").unwrap().is_empty());
        assert!(identify_premises(&scripted("Step 2: a plan"), "Q", &s, 5, "").unwrap().is_empty());
    }

    #[test]
    fn prompt_carries_full_preceding_context() {
        let backend = Arc::new(ScriptedBackend::new(|prompt: &str| {
            assert!(prompt.contains("Step 1: step 1\nStep 2: step 2\n"));
            assert!(prompt.contains("Next step to analyze:\nStep 3: step 3"));
            assert!(!prompt.contains("Step 4: step 4"));
            Ok(String::new())
        }));
        let gw = Gateway::live(backend, GatewayConfig::default());
        assert!(identify_premises(&gw, "Q", &steps(&[3], 4), 3, "").unwrap().is_empty());
    }

    #[test]
    fn chain_graph() {
        let s = steps(&[1, 2, 3], 3);
        let premises = BTreeMap::from([(2, vec![(0, String::new())]), (3, vec![(2, String::new())])]);
        let g = build_graph(&s, &premises).unwrap();
        assert_eq!(g.node_count, 4);
        let pairs: Vec<_> = g.edges.iter().map(|e| (e.premise, e.conclusion)).collect();
        assert_eq!(pairs, vec![(0, 2), (2, 3)]);
        assert_eq!(ancestors(&g, 3).unwrap(), BTreeSet::from([0, 2]));
        assert_eq!(descendants(&g, 0).unwrap(), BTreeSet::from([2, 3]));
        assert!(ancestors(&g, 1).unwrap().is_empty());
        assert_eq!(ancestors(&g, 9), Err(UnknownNode(9)));
    }

    #[test]
    fn edgeless_graph_and_forward_edge_guard() {
        let s = steps(&[1, 2], 2);
        assert!(build_graph(&s, &BTreeMap::new()).unwrap().edges.is_empty());
        let bad = BTreeMap::from([(1, vec![(2, String::new())])]);
        assert!(matches!(build_graph(&s, &bad), Err(ModelError::InvariantViolation { .. })));
    }
}
