//! Independent oracles and fixture builders shared by the integration tests
//! and the acceptance runner.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cot_inspector_core::diagnostics::{annotate_errors, pagerank, propagate, r_depth};
use cot_inspector_core::eval::{score_sample, MetricRow};
use cot_inspector_core::fact::SearchClient;
use cot_inspector_core::fixture::FixtureStore;
use cot_inspector_core::gateway::{Gateway, GatewayConfig};
use cot_inspector_core::logic::{FixtureSolver, FormalBundle, LogicChecker, TargetStatement};
use cot_inspector_core::model::{
    DependencyGraph, DiagnosisReport, ErrorAnnotation, ErrorKind, ErrorOrigin, EvidenceItem, FactStatus, FactVerdict,
    FunctionTag, LogicStatus, LogicVerdict, PremiseEdge, Provenance, ReasoningStep, SectionNode, Stance,
    StepIndex, VerifiabilityAssessment, VerifiabilityCategory,
};
use cot_inspector_core::pipeline::{assemble_report, Pipeline};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- graphs

/// Random premise DAG with `2..=max_nodes` nodes. About 80% of steps are
/// verifiable; each verifiable step draws a few backward premises.
pub fn random_dag(rng: &mut impl Rng, max_nodes: u32) -> DependencyGraph {
    let nodes = rng.gen_range(2..=max_nodes);
    let mut graph = DependencyGraph::empty(nodes - 1);
    graph.verifiable_nodes = (1..nodes).filter(|_| rng.gen_bool(0.8)).collect();
    let verifiable: Vec<StepIndex> = graph.verifiable_nodes.iter().copied().collect();
    for &conclusion in &verifiable {
        let candidates: Vec<StepIndex> =
            std::iter::once(0).chain(verifiable.iter().copied().filter(|&v| v < conclusion)).collect();
        let p = (2.5 / candidates.len() as f64).min(1.0);
        for premise in candidates {
            if rng.gen_bool(p) {
                graph.edges.push(PremiseEdge {
                    premise,
                    conclusion,
                    explanation: String::new(),
                });
            }
        }
    }
    graph.normalize();
    graph
}

/// Random core annotations on graph nodes; a node may carry both kinds.
pub fn random_core(rng: &mut impl Rng, graph: &DependencyGraph) -> Vec<ErrorAnnotation> {
    let mut out = Vec::new();
    for step in 1..graph.node_count {
        for kind in [ErrorKind::Factual, ErrorKind::Logical] {
            if rng.gen_bool(0.06) {
                out.push(ErrorAnnotation {
                    step,
                    kind,
                    origin: ErrorOrigin::Core,
                    cause_steps: vec![],
                });
            }
        }
    }
    out
}

/// Dense all-pairs premise distances (Floyd-Warshall). `dist[v][a]` is the
/// number of premise edges from `v` back to its ancestor `a`.
fn premise_distances(graph: &DependencyGraph) -> Vec<Vec<Option<usize>>> {
    let n = graph.node_count as usize;
    let mut dist = vec![vec![None; n]; n];
    for e in &graph.edges {
        dist[e.conclusion as usize][e.premise as usize] = Some(1);
    }
    for k in 0..n {
        for i in 0..n {
            let Some(ik) = dist[i][k] else { continue };
            let via_k = dist[k].clone();
            for (j, kj) in via_k.into_iter().enumerate() {
                if let Some(kj) = kj {
                    if dist[i][j].is_none_or(|d| ik + kj < d) {
                        dist[i][j] = Some(ik + kj);
                    }
                }
            }
        }
    }
    dist
}

/// Propagated annotations by brute-force ancestor reachability.
pub fn oracle_propagate(graph: &DependencyGraph, core: &[ErrorAnnotation]) -> Vec<ErrorAnnotation> {
    let dist = premise_distances(graph);
    let mut kinds: BTreeMap<StepIndex, BTreeSet<ErrorKind>> = BTreeMap::new();
    for e in core {
        kinds.entry(e.step).or_default().insert(e.kind);
    }
    let mut out = Vec::new();
    for v in 0..graph.node_count {
        if kinds.contains_key(&v) {
            continue;
        }
        let causes: Vec<StepIndex> = kinds.keys().copied().filter(|&c| dist[v as usize][c as usize].is_some()).collect();
        if causes.is_empty() {
            continue;
        }
        let nearest = causes.iter().filter_map(|&c| dist[v as usize][c as usize]).min().unwrap();
        let factual = causes
            .iter()
            .any(|&c| dist[v as usize][c as usize] == Some(nearest) && kinds[&c].contains(&ErrorKind::Factual));
        out.push(ErrorAnnotation {
            step: v,
            kind: if factual { ErrorKind::Factual } else { ErrorKind::Logical },
            origin: ErrorOrigin::Propagated,
            cause_steps: causes,
        });
    }
    out
}

/// PageRank on the reversed graph by dense matrix power iteration.
pub fn oracle_pagerank(graph: &DependencyGraph, damping: f64) -> Vec<f64> {
    let n = graph.node_count as usize;
    let mut outdeg = vec![0usize; n];
    for e in &graph.edges {
        outdeg[e.conclusion as usize] += 1;
    }
    // column-stochastic transition matrix, column j = where node j links
    let mut m = vec![vec![0.0f64; n]; n];
    for e in &graph.edges {
        m[e.premise as usize][e.conclusion as usize] = 1.0 / outdeg[e.conclusion as usize] as f64;
    }
    for (j, &d) in outdeg.iter().enumerate() {
        if d == 0 {
            for row in m.iter_mut() {
                row[j] = 1.0 / n as f64;
            }
        }
    }
    let teleport = (1.0 - damping) / n as f64;
    let mut p = vec![1.0 / n as f64; n];
    for _ in 0..2000 {
        let next: Vec<f64> = m
            .iter()
            .map(|row| teleport + damping * row.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let change: f64 = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
        p = next;
        if change < 1e-15 {
            break;
        }
    }
    let total: f64 = p.iter().sum();
    p.iter().map(|x| x / total).collect()
}

/// Longest path to an answer node by exhaustive path enumeration.
pub fn oracle_r_depth(graph: &DependencyGraph, answers: &BTreeSet<StepIndex>) -> Vec<u32> {
    fn walk(graph: &DependencyGraph, v: StepIndex, len: u32, answers: &BTreeSet<StepIndex>, best: &mut Option<u32>) {
        if answers.contains(&v) {
            *best = Some(best.map_or(len, |b| b.max(len)));
        }
        for e in graph.edges.iter().filter(|e| e.premise == v) {
            walk(graph, e.conclusion, len + 1, answers, best);
        }
    }
    (0..graph.node_count)
        .map(|v| {
            let mut best = None;
            walk(graph, v, 0, answers, &mut best);
            best.map_or(0, |b| b + 1)
        })
        .collect()
}

/// Propagation, PageRank and R-Depth against their oracles on random DAGs.
pub fn check_graph_oracles(cases: usize, seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    for case in 0..cases {
        let graph = random_dag(&mut rng, 200);
        graph.validate().map_err(|e| format!("case {case}: generator produced invalid graph: {e}"))?;
        let core = random_core(&mut rng, &graph);
        let got = propagate(&graph, &core);
        let want = oracle_propagate(&graph, &core);
        if got != want {
            return Err(format!("case {case}: propagate differs from reachability oracle"));
        }

        let pr = pagerank(&graph).map_err(|e| format!("case {case}: {e}"))?;
        let oracle = oracle_pagerank(&graph, 0.85);
        let max_delta = oracle
            .iter()
            .enumerate()
            .map(|(i, want)| (pr[&(i as StepIndex)] - want).abs())
            .fold(0.0, f64::max);
        if max_delta >= 1e-8 {
            return Err(format!("case {case}: pagerank max delta {max_delta:e}"));
        }
        let sum: f64 = pr.values().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(format!("case {case}: pagerank sums to {sum}"));
        }

        let small = random_dag(&mut rng, 12);
        let answers: BTreeSet<StepIndex> = (1..small.node_count).filter(|_| rng.gen_bool(0.3)).collect();
        let depths = r_depth(&small, &answers);
        let want = oracle_r_depth(&small, &answers);
        let got: Vec<u32> = (0..small.node_count).map(|v| depths[&v]).collect();
        if got != want {
            return Err(format!("case {case}: r_depth {got:?} != {want:?}"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- metrics

/// (P, R, F1, accuracy) by walking the universe and counting.
pub fn oracle_scores(
    pred: &BTreeSet<StepIndex>,
    gold: &BTreeSet<StepIndex>,
    universe: &BTreeSet<StepIndex>,
) -> (f64, f64, f64, f64) {
    let (mut tp, mut fp, mut fn_, mut tn) = (0u32, 0u32, 0u32, 0u32);
    for i in universe {
        match (pred.contains(i), gold.contains(i)) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let div = |a: u32, b: u32| if b == 0 { 0.0 } else { f64::from(a) / f64::from(b) };
    let p = div(tp, tp + fp);
    let r = div(tp, tp + fn_);
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f, div(tp + tn, tp + fp + fn_ + tn))
}

pub fn check_metric_oracle(cases: usize, seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    for case in 0..cases {
        let universe: BTreeSet<StepIndex> = (1..=rng.gen_range(0..80u32)).filter(|_| rng.gen_bool(0.7)).collect();
        let density = rng.gen::<f64>();
        let pred: BTreeSet<StepIndex> = universe.iter().copied().filter(|_| rng.gen_bool(density)).collect();
        let gold: BTreeSet<StepIndex> = universe.iter().copied().filter(|_| rng.gen_bool(0.3)).collect();
        let row = score_sample("s", &pred, &gold, &universe).map_err(|e| format!("case {case}: {e}"))?;
        let (p, r, f, a) = oracle_scores(&pred, &gold, &universe);
        if !(close(row.precision, p) && close(row.recall, r) && close(row.f1, f) && close(row.accuracy, a)) {
            return Err(format!("case {case}: {row:?} != ({p}, {r}, {f}, {a})"));
        }
    }
    let universe: BTreeSet<StepIndex> = (1..=10).collect();
    let gold: BTreeSet<StepIndex> = [2, 3].into();
    let empty = score_sample("e", &BTreeSet::new(), &gold, &universe).map_err(|e| e.to_string())?;
    if (empty.precision, empty.recall, empty.f1) != (0.0, 0.0, 0.0) {
        return Err(format!("empty prediction scored {empty:?}"));
    }
    Ok(())
}

/// Per-sample (P, R) pairs from the published per-sample comparison table.
pub const BIG_BENCH_PR: [(f64, f64); 13] = [
    (0.82, 0.69),
    (0.36, 0.80),
    (0.25, 0.73),
    (0.27, 0.38),
    (0.76, 0.92),
    (0.88, 0.47),
    (0.17, 1.00),
    (0.39, 0.42),
    (0.40, 0.25),
    (0.44, 1.00),
    (0.09, 0.33),
    (0.56, 0.71),
    (0.21, 0.86),
];

pub const OURS_PR: [(f64, f64); 13] = [
    (0.75, 0.69),
    (0.08, 1.00),
    (0.25, 0.73),
    (0.33, 0.63),
    (0.79, 0.92),
    (0.60, 0.87),
    (0.06, 0.75),
    (0.24, 0.83),
    (0.35, 0.63),
    (0.27, 0.88),
    (0.13, 1.00),
    (0.05, 1.00),
    (0.07, 0.50),
];

/// Published macro rows (P, R, F1).
pub const OURS_MACRO: (f64, f64, f64) = (0.306, 0.801, 0.386);
pub const BIG_BENCH_MACRO: (f64, f64, f64) = (0.432, 0.658, 0.470);
pub const MACRO_TOLERANCE: f64 = 0.01;

/// Per-sample verifiable counts of the released corpus.
pub const CORPUS_COUNTS: [usize; 13] = [91, 150, 76, 35, 59, 56, 70, 148, 28, 55, 117, 154, 132];

pub fn rows(pairs: &[(f64, f64)]) -> Vec<MetricRow> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, &(p, r))| MetricRow::new((i + 1).to_string(), p, r, 0.0))
        .collect()
}

// ---------------------------------------------------------- random reports

const WORDS: &[&str] = &[
    "launch", "year", "compute", "check", "Über", "naïve", "x²", "\"quoted\"", "tab\there", "emoji🚀", "back\\slash",
    "line\nbreak", "sum", "answer", "verify",
];

fn words(rng: &mut impl Rng, lo: usize, hi: usize) -> String {
    let n = rng.gen_range(lo..=hi);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn plain_words(rng: &mut impl Rng, lo: usize, hi: usize) -> String {
    const PLAIN: &[&str] = &["Recall", "facts", "Compute", "total", "Check", "result", "State", "answer", "Plan"];
    let n = rng.gen_range(lo..=hi);
    (0..n).map(|_| *PLAIN.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn random_fact(rng: &mut impl Rng) -> FactVerdict {
    let evidence: Vec<EvidenceItem> = (0..rng.gen_range(0..4))
        .map(|i| EvidenceItem {
            source: format!("https://example.org/{i}"),
            snippet: words(rng, 1, 6),
            stance: *[Stance::Support, Stance::Refute, Stance::Irrelevant].choose(rng).unwrap(),
            explanation: words(rng, 0, 4),
        })
        .collect();
    let supports = evidence.iter().any(|e| e.stance == Stance::Support);
    let refutes = evidence.iter().any(|e| e.stance == Stance::Refute);
    let status = match (supports, refutes) {
        (true, true) => FactStatus::Conflicting,
        (true, false) => FactStatus::Supported,
        (false, true) => FactStatus::Refuted,
        (false, false) => FactStatus::NoEvidence,
    };
    FactVerdict {
        status,
        evidence,
        queries: (0..rng.gen_range(0..3)).map(|_| words(rng, 1, 4)).collect(),
    }
}

fn random_logic(rng: &mut impl Rng) -> LogicVerdict {
    let status = *[
        LogicStatus::Entailed,
        LogicStatus::NotEntailed,
        LogicStatus::Contradicted,
        LogicStatus::TranslationFailed,
        LogicStatus::SolverError,
        LogicStatus::Timeout,
    ]
    .choose(rng)
    .unwrap();
    LogicVerdict {
        status,
        declarations: vec!["x = Int('x')".into()],
        constraints: (0..rng.gen_range(0..3)).map(|i| format!("x > {i}")).collect(),
        target_fl: "x > 0".into(),
        solver_transcript: "; consistency check\n(check-sat)\n; => sat\n".into(),
    }
}

fn random_sections(rng: &mut impl Rng, n: u32) -> Vec<SectionNode> {
    let mut sections: Vec<SectionNode> = Vec::new();
    for anchor in 1..=n {
        if anchor > 1 && !rng.gen_bool(0.3) {
            continue;
        }
        let ceiling = sections.last().map_or(0, |s| (s.depth + 1).min(2));
        sections.push(SectionNode {
            anchor,
            depth: rng.gen_range(0..=ceiling),
            summary: plain_words(rng, 2, 5),
            function_tag: *FunctionTag::ALL.choose(rng).unwrap(),
        });
    }
    sections
}

/// A random report satisfying every model invariant, sealed.
pub fn random_report(rng: &mut impl Rng) -> DiagnosisReport {
    let n: u32 = rng.gen_range(0..=25);
    let mut steps: Vec<ReasoningStep> = Vec::new();
    for index in 1..=n {
        let mut step = ReasoningStep::new(index, words(rng, 1, 12));
        let tag_count = rng.gen_range(1..=3);
        step.function_tags = FunctionTag::ALL.choose_multiple(rng, tag_count).copied().collect();
        if step.function_tags.len() > 1 {
            step.function_tags.retain(|t| *t != FunctionTag::Unknown);
        }
        let verifiable = rng.gen_bool(0.6);
        step.verifiability = Some(VerifiabilityAssessment {
            category: if verifiable { VerifiabilityCategory::Verifiable } else { VerifiabilityCategory::NonVerifiable },
            explanation: words(rng, 0, 5),
            confidence: rng.gen::<f64>(),
        });
        if verifiable {
            if rng.gen_bool(0.7) {
                step.fact_verdict = Some(random_fact(rng));
            }
            if rng.gen_bool(0.5) {
                step.logic_verdict = Some(random_logic(rng));
            }
        }
        steps.push(step);
    }
    let mut graph = DependencyGraph::empty(n);
    graph.verifiable_nodes = steps.iter().filter(|s| s.is_verifiable()).map(|s| s.index).collect();
    let verifiable: Vec<StepIndex> = graph.verifiable_nodes.iter().copied().collect();
    for &c in &verifiable {
        for p in std::iter::once(0).chain(verifiable.iter().copied().filter(|&v| v < c)) {
            if rng.gen_bool(0.3) {
                graph.edges.push(PremiseEdge {
                    premise: p,
                    conclusion: c,
                    explanation: words(rng, 0, 4),
                });
            }
        }
    }
    let provenance = Provenance {
        model_id: ["gpt-5", "local-model", "m✓"].choose(rng).unwrap().to_string(),
        created_at: Utc
            .timestamp_opt(rng.gen_range(0..4_000_000_000), rng.gen_range(0..1_000_000_000))
            .single()
            .unwrap(),
        pipeline_version: "0.1.0".into(),
        fixture_mode: rng.gen_bool(0.5),
        notes: (0..rng.gen_range(0..3)).map(|_| words(rng, 1, 5)).collect(),
    };
    let sections = random_sections(rng, n);
    let question = words(rng, 1, 15);
    let report = assemble_report(&question, steps, graph, sections, provenance).expect("random report is valid");
    debug_assert_eq!(report.errors, annotate_errors(&report.steps, &report.graph));
    report
}

pub fn check_roundtrips(cases: usize, seed: u64) -> Result<(), String> {
    use cot_inspector_core::{parse_report, serialize_report};
    let mut rng = rng(seed);
    for case in 0..cases {
        let report = random_report(&mut rng);
        let text = serialize_report(&report).map_err(|e| format!("case {case}: {e}"))?;
        let parsed = parse_report(&text).map_err(|e| format!("case {case}: {e}"))?;
        if parsed != report {
            return Err(format!("case {case}: parsed report differs"));
        }
        let again = serialize_report(&parsed).map_err(|e| format!("case {case}: {e}"))?;
        if again != text {
            return Err(format!("case {case}: re-serialization differs"));
        }
    }
    Ok(())
}

/// Mutations of a valid document that must each be rejected.
pub fn invalid_variants(valid: &str) -> Vec<(&'static str, String)> {
    let base: serde_json::Value = serde_json::from_str(valid).unwrap();
    let verifiable: Vec<u64> = base["graph"]["verifiable_nodes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    let (a, b) = (verifiable[0], verifiable[1]);
    let edge = |p: u64, c: u64| serde_json::json!({"premise": p, "conclusion": c, "explanation": "x"});
    let mut self_edge = base.clone();
    self_edge["graph"]["edges"].as_array_mut().unwrap().push(edge(b, b));
    let mut forward = base.clone();
    forward["graph"]["edges"].as_array_mut().unwrap().push(edge(b, a));
    let mut confidence = base.clone();
    confidence["steps"][0]["verifiability"]["confidence"] = serde_json::json!(1.5);
    vec![
        ("self-edge", self_edge.to_string()),
        ("forward edge", forward.to_string()),
        ("confidence out of range", confidence.to_string()),
    ]
}

pub fn check_invalid_rejected() -> Result<(), String> {
    let valid = std::fs::read_to_string(hubble_dir().join("expected_report.json")).map_err(|e| e.to_string())?;
    cot_inspector_core::parse_report(&valid).map_err(|e| format!("valid base rejected: {e}"))?;
    for (name, doc) in invalid_variants(&valid) {
        if cot_inspector_core::parse_report(&doc).is_ok() {
            return Err(format!("{name} document accepted"));
        }
    }
    Ok(())
}

// ------------------------------------------------------------------ logic

fn bundle(declarations: &[&str], constraints: &[&str], target: &str) -> FormalBundle {
    FormalBundle {
        declarations: declarations.iter().map(|s| s.to_string()).collect(),
        constraints: constraints.iter().map(|s| s.to_string()).collect(),
        statements: vec![],
        target: TargetStatement {
            sentence: target.to_string(),
            formula: target.to_string(),
        },
    }
}

/// The twelve hand-written solver cases with their expected status.
pub fn logic_cases() -> Vec<(&'static str, FormalBundle, LogicStatus)> {
    let ints = "a, b, c = Ints('a b c')";
    let bools = "p, q = Bools('p q')";
    let color = "Color, (Red, Green, Blue) = EnumSort('Color', ['Red', 'Green', 'Blue'])";
    vec![
        ("transitivity", bundle(&[ints], &["a < b", "b < c"], "a < c"), LogicStatus::Entailed),
        ("modus ponens", bundle(&[bools], &["Implies(p, q)", "p"], "q"), LogicStatus::Entailed),
        ("contraposition", bundle(&[bools], &["Implies(p, q)", "Not(q)"], "Not(p)"), LogicStatus::Entailed),
        ("unsupported leap", bundle(&["x = Int('x')"], &["x > 0"], "x > 10"), LogicStatus::NotEntailed),
        ("direct contradiction", bundle(&["x = Int('x')"], &["x == 3"], "x == 4"), LogicStatus::Contradicted),
        ("vacuous premises", bundle(&["x = Int('x')"], &["x == x"], "x > 0"), LogicStatus::NotEntailed),
        (
            "quantified instantiation",
            bundle(
                &[color, "bright = Function('bright', Color, BoolSort())", "k = Const('k', Color)"],
                &["ForAll([k], bright(k))"],
                "bright(Green)",
            ),
            LogicStatus::Entailed,
        ),
        (
            "linear identity (integers)",
            bundle(&["x, y = Ints('x y')"], &["x + y == 10", "x - y == 2"], "And(x == 6, y == 4)"),
            LogicStatus::Entailed,
        ),
        (
            "linear identity (reals)",
            bundle(&["r = Real('r')"], &["2 * r + 1 == 4"], "r == 1.5"),
            LogicStatus::Entailed,
        ),
        (
            "enum exclusivity",
            bundle(&[color, "shade = Const('shade', Color)"], &["shade == Red"], "shade != Green"),
            LogicStatus::Entailed,
        ),
        (
            "nonlinear real exponent",
            bundle(&["x, y = Reals('x y')"], &["x > 1", "y > 1", "x ** y == 3"], "x < 3"),
            LogicStatus::NotEntailed,
        ),
        (
            "timeout on factoring",
            bundle(
                &["p, q = Ints('p q')"],
                &["p * q == 1208925819614629174706189", "p > 1", "q > 1"],
                "p <= q",
            ),
            LogicStatus::Timeout,
        ),
    ]
}

// ----------------------------------------------------------------- hubble

pub fn hubble_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/hubble")
}

pub fn hubble_inputs() -> (String, String) {
    let dir = hubble_dir();
    (
        std::fs::read_to_string(dir.join("question.txt")).unwrap().trim().to_string(),
        std::fs::read_to_string(dir.join("trace.txt")).unwrap(),
    )
}

/// Fully offline pipeline over the recorded Hubble fixtures.
pub fn hubble_pipeline() -> Pipeline {
    let dir = hubble_dir();
    let open = |sub: &str| FixtureStore::open(dir.join(sub)).unwrap();
    Pipeline::new(Gateway::replay(open("llm"), GatewayConfig::default()))
        .with_search(SearchClient::replay(open("search")))
        .with_logic(LogicChecker::new(Arc::new(FixtureSolver::replay(open("solver")))))
}
