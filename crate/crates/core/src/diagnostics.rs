//! Error labeling, propagation and importance scores over the premise graph.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DependencyGraph, ErrorAnnotation, ErrorKind, ErrorOrigin, FunctionTag, ReasoningStep, StepIndex};

pub const DAMPING: f64 = 0.85;
pub const TOLERANCE: f64 = 1e-9;
pub const MAX_ITERATIONS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("pagerank did not converge in {iterations} iterations")]
    NonConvergence {
        iterations: usize,
        last: BTreeMap<StepIndex, f64>,
    },
}

/// One Core annotation per flagged verdict; a step can carry both kinds.
pub fn mark_core_errors(steps: &[ReasoningStep]) -> Vec<ErrorAnnotation> {
    let mut out = Vec::new();
    for step in steps {
        if step.fact_verdict.as_ref().is_some_and(|v| v.flagged()) {
            out.push(core(step.index, ErrorKind::Factual));
        }
        if step.logic_verdict.as_ref().is_some_and(|v| v.status.flagged()) {
            out.push(core(step.index, ErrorKind::Logical));
        }
    }
    out
}

fn core(step: StepIndex, kind: ErrorKind) -> ErrorAnnotation {
    ErrorAnnotation {
        step,
        kind,
        origin: ErrorOrigin::Core,
        cause_steps: Vec::new(),
    }
}

/// Propagated annotations for every non-core node with a core ancestor.
///
/// The kind comes from the nearest core ancestor (fewest premise edges),
/// preferring Factual when several are equally near.
pub fn propagate(graph: &DependencyGraph, core_errors: &[ErrorAnnotation]) -> Vec<ErrorAnnotation> {
    let mut core_kinds: BTreeMap<StepIndex, BTreeSet<ErrorKind>> = BTreeMap::new();
    for e in core_errors.iter().filter(|e| e.origin == ErrorOrigin::Core) {
        core_kinds.entry(e.step).or_default().insert(e.kind);
    }
    if core_kinds.is_empty() {
        return Vec::new();
    }
    let (premises_of, _) = graph.adjacency();
    let mut out = Vec::new();
    for node in 0..graph.node_count {
        if core_kinds.contains_key(&node) {
            continue;
        }
        // breadth-first over premises gives distances to every ancestor
        let mut dist: BTreeMap<StepIndex, usize> = BTreeMap::new();
        let mut queue = VecDeque::from([(node, 0usize)]);
        while let Some((v, d)) = queue.pop_front() {
            for &p in &premises_of[v as usize] {
                if let std::collections::btree_map::Entry::Vacant(slot) = dist.entry(p) {
                    slot.insert(d + 1);
                    queue.push_back((p, d + 1));
                }
            }
        }
        let causes: Vec<StepIndex> = dist.keys().copied().filter(|a| core_kinds.contains_key(a)).collect();
        let Some(nearest) = causes.iter().map(|c| dist[c]).min() else {
            continue;
        };
        let factual_near = causes
            .iter()
            .filter(|c| dist[*c] == nearest)
            .any(|c| core_kinds[c].contains(&ErrorKind::Factual));
        out.push(ErrorAnnotation {
            step: node,
            kind: if factual_near { ErrorKind::Factual } else { ErrorKind::Logical },
            origin: ErrorOrigin::Propagated,
            cause_steps: causes,
        });
    }
    out
}

/// PageRank on the reversed graph, so steps many conclusions rely on score
/// high. Dangling mass is spread uniformly.
pub fn pagerank(graph: &DependencyGraph) -> Result<BTreeMap<StepIndex, f64>, DiagnosticsError> {
    pagerank_with(graph, DAMPING, TOLERANCE, MAX_ITERATIONS)
}

pub fn pagerank_with(
    graph: &DependencyGraph,
    damping: f64,
    tol: f64,
    max_iter: usize,
) -> Result<BTreeMap<StepIndex, f64>, DiagnosticsError> {
    let n = graph.node_count as usize;
    if n == 0 {
        return Ok(BTreeMap::new());
    }
    // reversed edge conclusion -> premise: a node links out to its premises
    let (premises_of, _) = graph.adjacency();
    let nf = n as f64;
    let mut rank = vec![1.0 / nf; n];
    for _ in 0..max_iter {
        let dangling: f64 = (0..n).filter(|&v| premises_of[v].is_empty()).map(|v| rank[v]).sum();
        let base = (1.0 - damping) / nf + damping * dangling / nf;
        let mut next = vec![base; n];
        for v in 0..n {
            let out = &premises_of[v];
            if out.is_empty() {
                continue;
            }
            let share = damping * rank[v] / out.len() as f64;
            for &p in out {
                next[p as usize] += share;
            }
        }
        let change: f64 = next.iter().zip(&rank).map(|(a, b)| (a - b).abs()).sum();
        rank = next;
        if change < tol {
            return Ok(to_map(&rank));
        }
    }
    Err(DiagnosticsError::NonConvergence {
        iterations: max_iter,
        last: to_map(&rank),
    })
}

fn to_map(rank: &[f64]) -> BTreeMap<StepIndex, f64> {
    let total: f64 = rank.iter().sum();
    rank.iter().enumerate().map(|(i, r)| (i as StepIndex, r / total)).collect()
}

/// 1 + longest premise-edge path to an answer node; 0 when none is reachable.
pub fn r_depth(graph: &DependencyGraph, answer_nodes: &BTreeSet<StepIndex>) -> BTreeMap<StepIndex, u32> {
    let n = graph.node_count as usize;
    let (_, conclusions_of) = graph.adjacency();
    let mut depth = vec![0u32; n];
    // edges point forward, so reverse index order sees conclusions first
    for v in (0..n).rev() {
        let own = u32::from(answer_nodes.contains(&(v as StepIndex)));
        let via = conclusions_of[v]
            .iter()
            .map(|&c| depth[c as usize])
            .filter(|&d| d > 0)
            .max()
            .map_or(0, |d| d + 1);
        depth[v] = own.max(via);
    }
    depth.into_iter().enumerate().map(|(i, d)| (i as StepIndex, d)).collect()
}

/// Back-links from each uncertainty-management step to its direct premises.
pub fn uncertainty_links(graph: &DependencyGraph, steps: &[ReasoningStep]) -> Vec<(StepIndex, StepIndex)> {
    let mut out = Vec::new();
    for step in steps.iter().filter(|s| s.has_tag(FunctionTag::UncertaintyManagement)) {
        for premise in graph.premises_of(step.index) {
            if premise < step.index {
                out.push((step.index, premise));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeStats {
    pub propagated_fraction: f64,
    /// `(first step, length)` of each maximal run of consecutive error steps.
    pub bursts: Vec<(StepIndex, u32)>,
}

pub fn cascade_stats(errors: &[ErrorAnnotation]) -> CascadeStats {
    let propagated = errors.iter().filter(|e| e.origin == ErrorOrigin::Propagated).count();
    let steps: BTreeSet<StepIndex> = errors.iter().map(|e| e.step).collect();
    let mut bursts: Vec<(StepIndex, u32)> = Vec::new();
    for s in steps {
        match bursts.last_mut() {
            Some((start, len)) if *start + *len == s => *len += 1,
            _ => bursts.push((s, 1)),
        }
    }
    CascadeStats {
        propagated_fraction: propagated as f64 / errors.len().max(1) as f64,
        bursts,
    }
}

/// Core plus propagated annotations, sorted by step, kind and origin.
pub fn annotate_errors(steps: &[ReasoningStep], graph: &DependencyGraph) -> Vec<ErrorAnnotation> {
    let mut errors = mark_core_errors(steps);
    errors.extend(propagate(graph, &errors));
    errors.sort_by_key(|e| (e.step, e.kind, e.origin));
    errors
}

/// Top-`k` nodes by score, ties broken by lower index.
pub fn top_k<V: PartialOrd + Copy>(scores: &BTreeMap<StepIndex, V>, k: usize) -> Vec<StepIndex> {
    let mut nodes: Vec<(StepIndex, V)> = scores.iter().map(|(&n, &v)| (n, v)).collect();
    nodes.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
    nodes.into_iter().take(k).map(|(n, _)| n).collect()
}
