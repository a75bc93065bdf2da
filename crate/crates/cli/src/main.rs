use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Context;
use clap::{Parser, Subcommand};

use cot_inspector::api::{self, AppState};
use cot_inspector::backends::{build_pipeline, replay_pipeline, BackendOptions};
use cot_inspector::commands::{self, parse_pred_arg, read_input, DiagnoseRun};
use cot_inspector::CliError;
use cot_inspector_core::store::ReportStore;
use cot_inspector_core::DiagnoseOptions;

/// Step-level error diagnosis for chain-of-thought traces.
#[derive(Debug, Parser)]
#[command(name = "cot-inspector", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Diagnose one trace and store the report.
    Diagnose {
        /// Question file, or `-` for stdin.
        #[arg(long)]
        question: String,
        /// Trace file, or `-` for stdin.
        #[arg(long)]
        trace: String,
        #[arg(long)]
        skip_fact: bool,
        #[arg(long)]
        skip_logic: bool,
        /// Replay recorded llm/, search/ and solver/ stores from this directory.
        #[arg(long, conflicts_with = "record")]
        fixtures: Option<PathBuf>,
        /// Record live traffic as fixtures into this directory.
        #[arg(long)]
        record: Option<PathBuf>,
        #[arg(long, default_value = "reports")]
        store: PathBuf,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Keep solver scripts and outputs in this directory.
        #[arg(long)]
        keep_solver_artifacts: Option<PathBuf>,
        #[arg(long)]
        smt_timeout_ms: Option<u64>,
    },
    /// Score prediction files against a labelled dataset.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// `<name>=<predictions.json>`, repeatable.
        #[arg(long = "pred", value_parser = parse_pred_arg, required = true)]
        preds: Vec<(String, PathBuf)>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the JSON API (and optionally the built UI).
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "reports")]
        store: PathBuf,
        #[arg(long)]
        ui_dir: Option<PathBuf>,
        /// Enable POST /api/diagnose by replaying these fixtures.
        #[arg(long)]
        fixtures: Option<PathBuf>,
    },
    /// Copy a stored report to a file.
    Export {
        #[arg(long)]
        id: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "reports")]
        store: PathBuf,
    },
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Diagnose {
            question,
            trace,
            skip_fact,
            skip_logic,
            fixtures,
            record,
            store,
            out,
            keep_solver_artifacts,
            smt_timeout_ms,
        } => {
            if question == "-" && trace == "-" {
                return Err(CliError::Usage("--question and --trace cannot both read stdin".into()));
            }
            let pipeline = build_pipeline(&BackendOptions {
                fixtures,
                record,
                keep_solver_artifacts,
                smt_timeout: smt_timeout_ms.map(Duration::from_millis),
                needs_search: !skip_fact,
            })?;
            let question = read_input(&question)?;
            let trace = read_input(&trace)?;
            let options = DiagnoseOptions { skip_fact, skip_logic, ..Default::default() };
            let id = commands::diagnose(
                &pipeline,
                DiagnoseRun { question: &question, trace: &trace, options, store: &store, out: out.as_deref() },
            )?;
            println!("{id}");
            Ok(())
        }
        Command::Eval { dataset, preds, out } => {
            print!("{}", commands::eval(&dataset, &preds, &out)?);
            Ok(())
        }
        Command::Serve { port, store, ui_dir, fixtures } => {
            let pipeline = fixtures.as_deref().map(|dir| replay_pipeline(dir, None)).transpose()?;
            let state = AppState::new(ReportStore::open(&store)?, pipeline);
            serve(port, state, ui_dir).map_err(|e| CliError::Io(format!("{e:#}")))
        }
        Command::Export { id, out, store } => commands::export(&store, &id, &out),
    }
}

fn serve(port: u16, state: AppState, ui_dir: Option<PathBuf>) -> anyhow::Result<()> {
    if let Some(dir) = ui_dir.as_deref().filter(|d| !Path::new(d).is_dir()) {
        anyhow::bail!("--ui-dir {} is not a directory", dir.display());
    }
    let runtime = tokio::runtime::Runtime::new().context("starting the async runtime")?;
    let addr = SocketAddr::from(([0, 0, 0, 0], port));
    runtime.block_on(api::serve(addr, state, ui_dir)).with_context(|| format!("serving on port {port}"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
