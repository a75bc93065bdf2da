//! External SMT solver invocation, with record/replay.

use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::fixture::{write_atomic, FixtureStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverAnswer {
    Sat,
    Unsat,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolverRun {
    pub answer: SolverAnswer,
    /// Raw solver stdout.
    pub output: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SolverError {
    #[error("solver timed out after {0} ms")]
    Timeout(u64),
    #[error("solver failed (exit code {exit_code:?}): {stderr}")]
    Failed { exit_code: Option<i32>, stderr: String },
    #[error("could not run solver: {0}")]
    Io(String),
    #[error("no recorded solver run for key {0}")]
    FixtureMiss(String),
}

pub trait SolverBackend: Send + Sync {
    fn run(&self, script: &str, timeout: Duration) -> Result<SolverRun, SolverError>;
}

/// Runs a solver executable on a script file argument.
#[derive(Debug, Clone)]
pub struct ProcessSolver {
    program: PathBuf,
    args: Vec<String>,
    keep_artifacts: Option<PathBuf>,
}

impl ProcessSolver {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        ProcessSolver {
            program: program.into(),
            args: Vec::new(),
            keep_artifacts: None,
        }
    }

    /// `SMT_SOLVER_PATH`, or `z3` from `PATH`.
    pub fn from_env() -> Self {
        ProcessSolver::new(std::env::var("SMT_SOLVER_PATH").unwrap_or_else(|_| "z3".to_string()))
    }

    /// Extra arguments placed before the script path.
    pub fn with_args(mut self, args: Vec<String>) -> Self {
        self.args = args;
        self
    }

    /// Keeps every script (named by content hash) under `dir`.
    pub fn keep_artifacts(mut self, dir: impl Into<PathBuf>) -> Self {
        self.keep_artifacts = Some(dir.into());
        self
    }

    pub fn program(&self) -> &std::path::Path {
        &self.program
    }
}

impl SolverBackend for ProcessSolver {
    fn run(&self, script: &str, timeout: Duration) -> Result<SolverRun, SolverError> {
        let io = |e: std::io::Error| SolverError::Io(e.to_string());
        // the temp file lives until the end of this call
        let (_tmp, path) = match &self.keep_artifacts {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(io)?;
                let path = dir.join(format!("{}.smt2", &crate::sha256_hex(script)[..16]));
                write_atomic(&path, script.as_bytes()).map_err(io)?;
                (None, path)
            }
            None => {
                let mut tmp = tempfile::Builder::new().suffix(".smt2").tempfile().map_err(io)?;
                std::io::Write::write_all(&mut tmp, script.as_bytes()).map_err(io)?;
                let path = tmp.path().to_path_buf();
                (Some(tmp), path)
            }
        };
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .arg(&path)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| SolverError::Io(format!("{}: {e}", self.program.display())))?;
        let stdout = drain(child.stdout.take());
        let stderr = drain(child.stderr.take());
        let status = match child.wait_timeout(timeout).map_err(io)? {
            Some(status) => status,
            None => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(SolverError::Timeout(timeout.as_millis() as u64));
            }
        };
        let output = stdout.join().unwrap_or_default();
        let errors = stderr.join().unwrap_or_default();
        match output.lines().map(str::trim).find(|l| !l.is_empty()) {
            Some("sat") => Ok(SolverRun { answer: SolverAnswer::Sat, output }),
            Some("unsat") => Ok(SolverRun { answer: SolverAnswer::Unsat, output }),
            Some("unknown") => Ok(SolverRun { answer: SolverAnswer::Unknown, output }),
            _ => Err(SolverError::Failed {
                exit_code: status.code(),
                stderr: format!("{errors}{output}").trim().to_string(),
            }),
        }
    }
}

fn drain<R: Read + Send + 'static>(pipe: Option<R>) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut text = String::new();
        if let Some(mut pipe) = pipe {
            let _ = pipe.read_to_string(&mut text);
        }
        text
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
enum Recorded {
    Answer { answer: SolverAnswer, output: String },
    Timeout { timeout_ms: u64 },
    Failed { exit_code: Option<i32>, stderr: String },
}

pub fn solver_key(script: &str) -> String {
    crate::sha256_hex(format!("solver\n{script}"))
}

/// Replays recorded solver runs, or records the runs of an inner backend.
pub struct FixtureSolver {
    store: FixtureStore,
    inner: Option<Arc<dyn SolverBackend>>,
}

impl FixtureSolver {
    pub fn replay(store: FixtureStore) -> Self {
        FixtureSolver { store, inner: None }
    }

    pub fn recording(inner: Arc<dyn SolverBackend>, store: FixtureStore) -> Self {
        FixtureSolver {
            store,
            inner: Some(inner),
        }
    }
}

impl SolverBackend for FixtureSolver {
    fn run(&self, script: &str, timeout: Duration) -> Result<SolverRun, SolverError> {
        let key = solver_key(script);
        if let Some(text) = self.store.get(&key) {
            let recorded: Recorded =
                serde_json::from_str(&text).map_err(|e| SolverError::Io(format!("corrupt solver fixture {key}: {e}")))?;
            return match recorded {
                Recorded::Answer { answer, output } => Ok(SolverRun { answer, output }),
                Recorded::Timeout { timeout_ms } => Err(SolverError::Timeout(timeout_ms)),
                Recorded::Failed { exit_code, stderr } => Err(SolverError::Failed { exit_code, stderr }),
            };
        }
        let Some(inner) = &self.inner else {
            return Err(SolverError::FixtureMiss(key));
        };
        let result = inner.run(script, timeout);
        let recorded = match &result {
            Ok(run) => Recorded::Answer {
                answer: run.answer,
                output: run.output.clone(),
            },
            Err(SolverError::Timeout(ms)) => Recorded::Timeout { timeout_ms: *ms },
            Err(SolverError::Failed { exit_code, stderr }) => Recorded::Failed {
                exit_code: *exit_code,
                stderr: stderr.clone(),
            },
            // environment problems are not worth pinning
            Err(_) => return result,
        };
        let mut text = serde_json::to_string_pretty(&recorded).expect("record serializes");
        text.push('\n');
        self.store
            .put(&key, &text, json!({"script_bytes": script.len()}))
            .map_err(|e| SolverError::Io(e.to_string()))?;
        result
    }
}
