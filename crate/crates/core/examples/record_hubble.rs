//! Records the Hubble golden fixtures.
//!
//! Model and search responses are hand-authored below and written through the
//! recording gateway and search client, so the stored keys are exactly the
//! ones a replay run will ask for. Solver answers come from a real z3 run.
//! Finally the pipeline is replayed from the fresh store and the report is
//! written next to the fixtures.
//!
//! Run with `cargo run -p cot-inspector-core --example record_hubble`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use serde_json::json;

use cot_inspector_core::fact::{SearchClient, SearchResult, StaticSearch};
use cot_inspector_core::fixture::FixtureStore;
use cot_inspector_core::gateway::{BackendFailure, Gateway, GatewayConfig, ScriptedBackend};
use cot_inspector_core::logic::{FixtureSolver, LogicChecker, ProcessSolver};
use cot_inspector_core::{serialize_report, DiagnoseOptions, Pipeline};

const STEPS: [&str; 6] = [
    "I need to find how many years passed between the launch of the Hubble Space Telescope and 2025.",
    "First, I should recall when the telescope was launched.",
    "The Hubble Space Telescope was launched in 1992.",
    "To find the years passed, subtract 1992 from 2025: 2025 - 1992 = 33.",
    "So 33 years have passed since the launch.",
    "The answer is 33 years.",
];

const LAUNCH_QUERY: &str = "Hubble Space Telescope launch year";
const ARITHMETIC_QUERY: &str = "2025 minus 1992";
const DURATION_QUERY: &str = "number of years since launch 33 years";

fn classification() -> String {
    json!({
        "1": {"function_tag": ["problem_setup"]},
        "2": {"function_tag": ["plan_generation"]},
        "3": {"function_tag": ["fact_retrieval"]},
        "4": {"function_tag": ["active_computation"]},
        "5": {"function_tag": ["result_consolidation"]},
        "6": {"function_tag": ["final_answer_emission"]},
    })
    .to_string()
}

fn verifiability() -> String {
    json!([
        {"id": "1", "category": "Non_verifiable", "explanation": "Restates the task.", "confidence": 0.93},
        {"id": "2", "category": "Non_verifiable", "explanation": "Plans the next action.", "confidence": 0.95},
        {"id": "3", "category": "Verifiable", "explanation": "Historical date that can be looked up.", "confidence": 0.98},
        {"id": "4", "category": "Verifiable", "explanation": "Arithmetic that can be checked.", "confidence": 0.97},
        {"id": "5", "category": "Verifiable", "explanation": "Restates a computed quantity.", "confidence": 0.9},
        {"id": "6", "category": "Verifiable", "explanation": "States the final numeric answer.", "confidence": 0.92}
    ])
    .to_string()
}

fn premises(step: usize) -> &'static str {
    match step {
        3 => "No previous step is a premise; this step recalls a fact from memory.",
        4 => "Step 0: asks for the years between the launch and 2025\nStep 3: gives the launch year 1992",
        5 => "Step 4: computes 2025 - 1992 = 33",
        _ => "Step 0: asks for the number of years\nStep 5: states that 33 years have passed",
    }
}

fn translation(step: usize) -> String {
    let bundle = match step {
        4 => json!({
            "declarations": ["launch_year = Int('launch_year')", "target_year = Int('target_year')", "years_passed = Int('years_passed')"],
            "constraints": ["target_year == 2025", "launch_year == 1992"],
            "statements": ["years_passed == target_year - launch_year"],
            "target_statement": {"sentence": STEPS[3], "FL": "years_passed == 33"}
        }),
        5 => json!({
            "declarations": ["years_passed = Int('years_passed')"],
            "constraints": ["years_passed == 2025 - 1992"],
            "statements": [],
            "target_statement": {"sentence": STEPS[4], "FL": "years_passed == 33"}
        }),
        _ => json!({
            "declarations": ["years_passed = Int('years_passed')", "answer = Int('answer')"],
            "constraints": ["years_passed == 33"],
            "statements": ["answer == years_passed"],
            "target_statement": {"sentence": STEPS[5], "FL": "answer == 33"}
        }),
    };
    format!("```json\n{}\n```", serde_json::to_string_pretty(&bundle).expect("serializes"))
}

fn queries(step: usize) -> String {
    match step {
        3 => json!([LAUNCH_QUERY]),
        4 => json!([ARITHMETIC_QUERY]),
        _ => json!([DURATION_QUERY]),
    }
    .to_string()
}

fn stances(step: usize) -> String {
    match step {
        3 => json!([
            {"result": 1, "stance": "refute", "explanation": "NASA gives the launch date as April 24, 1990, not 1992."},
            {"result": 2, "stance": "refute", "explanation": "The article dates the launch to 1990."}
        ]),
        _ => json!([
            {"result": 1, "stance": "support", "explanation": "The result matches the stated number of years."}
        ]),
    }
    .to_string()
}

fn respond(prompt: &str) -> Result<String, BackendFailure> {
    let step_with = |marker: &str| {
        (1..=STEPS.len()).find(|&i| prompt.contains(&format!("{marker}{}", STEPS[i - 1])))
    };
    if prompt.contains("label each step with function tags") {
        return Ok(classification());
    }
    if prompt.contains("Classify each into Verifiable|Non_verifiable") {
        return Ok(verifiability());
    }
    if prompt.contains("identify the steps that serve as premises") {
        let target = (1..=STEPS.len())
            .find(|&i| prompt.contains(&format!("Next step to analyze:\nStep {i}: {}", STEPS[i - 1])));
        return target.map(|i| premises(i).to_string()).ok_or_else(unscripted);
    }
    if prompt.contains("\"target_statement\": The target statement") {
        return step_with("target_statement:\n").map(translation).ok_or_else(unscripted);
    }
    if prompt.contains("atomic, independently checkable factual claims") {
        return step_with("Reasoning step:\n").map(queries).ok_or_else(unscripted);
    }
    if prompt.contains("supports the claim, refutes the claim") {
        return step_with("Claim:\n").map(stances).ok_or_else(unscripted);
    }
    if prompt.contains("recover the *actual reasoning process*") {
        return Ok(json!({
            "1": {"function_tag": "problem_setup", "depth": 0, "abstract": "Frame the question"},
            "3": {"function_tag": "fact_retrieval", "depth": 0, "abstract": "Recall launch year"},
            "4": {"function_tag": "active_computation", "depth": 0, "abstract": "Compute elapsed years"},
            "6": {"function_tag": "final_answer_emission", "depth": 1, "abstract": "State final answer"}
        })
        .to_string());
    }
    Err(unscripted())
}

fn unscripted() -> BackendFailure {
    BackendFailure::Status(400, "no scripted response for this prompt".into())
}

fn result(rank: u32, url: &str, title: &str, snippet: &str) -> SearchResult {
    SearchResult {
        url: url.into(),
        title: title.into(),
        snippet: snippet.into(),
        rank,
    }
}

fn search_results() -> StaticSearch {
    let mut map = HashMap::new();
    map.insert(
        LAUNCH_QUERY.to_string(),
        vec![
            result(
                1,
                "https://science.nasa.gov/mission/hubble/",
                "Hubble Space Telescope - NASA Science",
                "The Hubble Space Telescope was launched on April 24, 1990, aboard the space shuttle Discovery.",
            ),
            result(
                2,
                "https://en.wikipedia.org/wiki/Hubble_Space_Telescope",
                "Hubble Space Telescope - Wikipedia",
                "The Hubble Space Telescope is a space telescope that was launched into low Earth orbit in 1990 and remains in operation.",
            ),
        ],
    );
    map.insert(
        ARITHMETIC_QUERY.to_string(),
        vec![result(1, "https://www.calculator.net/", "Basic Calculator", "2025 - 1992 = 33")],
    );
    map.insert(
        DURATION_QUERY.to_string(),
        vec![result(
            1,
            "https://www.timeanddate.com/date/duration.html",
            "Date Duration Calculator",
            "From January 1, 1992 to January 1, 2025 the duration is 33 years.",
        )],
    );
    StaticSearch(map)
}

fn main() -> anyhow::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/hubble");
    for sub in ["llm", "search", "solver"] {
        let dir = root.join(sub);
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
    }
    let question = fs::read_to_string(root.join("question.txt"))?.trim().to_string();
    let trace = fs::read_to_string(root.join("trace.txt"))?;
    let open = |sub: &str| FixtureStore::open(root.join(sub));
    let config = GatewayConfig::default();
    let options = DiagnoseOptions::default();

    let recording = Pipeline::new(Gateway::recording(Arc::new(ScriptedBackend::new(respond)), open("llm")?, config.clone()))
        .with_search(SearchClient::live(Arc::new(search_results()), Some(open("search")?)).with_rate_limit(0.0))
        .with_logic(LogicChecker::new(Arc::new(FixtureSolver::recording(
            Arc::new(ProcessSolver::from_env()),
            open("solver")?,
        ))));
    recording.diagnose(&question, &trace, &options)?;

    let replay = Pipeline::new(Gateway::replay(open("llm")?, config))
        .with_search(SearchClient::replay(open("search")?))
        .with_logic(LogicChecker::new(Arc::new(FixtureSolver::replay(open("solver")?))))
        .with_created_at(Utc.timestamp_opt(0, 0).single().expect("epoch"));
    let report = replay.diagnose(&question, &trace, &options)?;
    let text = serialize_report(&report)?;
    fs::write(root.join("expected_report.json"), &text)?;
    println!("{}", report.report_id);
    Ok(())
}
