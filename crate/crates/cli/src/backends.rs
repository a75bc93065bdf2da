//! Wires the pipeline to recorded fixtures or to live backends configured
//! through the environment.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use cot_inspector_core::fact::{SearchClient, SerperBackend};
use cot_inspector_core::fixture::FixtureStore;
use cot_inspector_core::gateway::{Gateway, GatewayConfig, HttpBackend};
use cot_inspector_core::logic::{FixtureSolver, LogicChecker, ProcessSolver, SolverBackend};
use cot_inspector_core::Pipeline;

use crate::CliError;

#[derive(Debug, Clone, Default)]
pub struct BackendOptions {
    /// Replay from `<dir>/{llm,search,solver}` instead of calling out.
    pub fixtures: Option<PathBuf>,
    /// Record live traffic into `<dir>/{llm,search,solver}`.
    pub record: Option<PathBuf>,
    pub keep_solver_artifacts: Option<PathBuf>,
    pub smt_timeout: Option<Duration>,
    pub needs_search: bool,
}

fn open(dir: &Path, sub: &str) -> Result<FixtureStore, CliError> {
    FixtureStore::open(dir.join(sub)).map_err(|e| CliError::Io(format!("{}: {e}", dir.join(sub).display())))
}

pub fn build_pipeline(options: &BackendOptions) -> Result<Pipeline, CliError> {
    match &options.fixtures {
        Some(dir) => replay_pipeline(dir, options.smt_timeout),
        None => live_pipeline(options),
    }
}

/// Subdirectories that do not exist are left unconfigured, so a missing
/// search or solver store surfaces as a stage failure rather than creating
/// empty directories in the fixture tree.
pub fn replay_pipeline(dir: &Path, smt_timeout: Option<Duration>) -> Result<Pipeline, CliError> {
    if !dir.join("llm").is_dir() {
        return Err(CliError::Usage(format!("{} has no llm/ fixture store", dir.display())));
    }
    let mut pipeline = Pipeline::new(Gateway::replay(open(dir, "llm")?, GatewayConfig::from_env()));
    if dir.join("search").is_dir() {
        pipeline = pipeline.with_search(SearchClient::replay(open(dir, "search")?));
    }
    if dir.join("solver").is_dir() {
        let solver = Arc::new(FixtureSolver::replay(open(dir, "solver")?));
        pipeline = pipeline.with_logic(checker(solver, smt_timeout));
    }
    Ok(pipeline)
}

fn live_pipeline(options: &BackendOptions) -> Result<Pipeline, CliError> {
    let llm = HttpBackend::from_env()
        .ok_or_else(|| CliError::Usage("LLM_API_BASE is not set (use --fixtures for offline replay)".into()))?;
    let record = |sub| options.record.as_deref().map(|dir| open(dir, sub)).transpose();
    let config = GatewayConfig::from_env();
    let gateway = match record("llm")? {
        Some(store) => Gateway::recording(Arc::new(llm), store, config),
        None => Gateway::live(Arc::new(llm), config),
    };
    let mut pipeline = Pipeline::new(gateway);

    match SerperBackend::from_env() {
        Some(search) => pipeline = pipeline.with_search(SearchClient::live(Arc::new(search), record("search")?)),
        None if options.needs_search => {
            return Err(CliError::Usage("SEARCH_API_KEY is not set (or pass --skip-fact)".into()));
        }
        None => {}
    }

    let mut process = ProcessSolver::from_env();
    if let Some(dir) = &options.keep_solver_artifacts {
        process = process.keep_artifacts(dir);
    }
    let solver: Arc<dyn SolverBackend> = match record("solver")? {
        Some(store) => Arc::new(FixtureSolver::recording(Arc::new(process), store)),
        None => Arc::new(process),
    };
    Ok(pipeline.with_logic(checker(solver, options.smt_timeout)))
}

fn checker(solver: Arc<dyn SolverBackend>, timeout: Option<Duration>) -> LogicChecker {
    let checker = LogicChecker::new(solver);
    match timeout {
        Some(t) => checker.with_timeout(t),
        None => checker,
    }
}
