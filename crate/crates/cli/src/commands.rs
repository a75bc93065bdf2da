//! Implementations of the `diagnose`, `eval` and `export` subcommands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde_json::json;

use cot_inspector_core::eval::{compare_methods, load_dataset, macro_average, parse_predictions, score_predictions, MetricRow};
use cot_inspector_core::store::ReportStore;
use cot_inspector_core::{serialize_report, DiagnoseOptions, Pipeline};

use crate::CliError;

/// Reads a file, or standard input for `-`.
pub fn read_input(source: &str) -> Result<String, CliError> {
    if source == "-" {
        let mut text = String::new();
        std::io::stdin()
            .read_to_string(&mut text)
            .map_err(|e| CliError::Io(format!("stdin: {e}")))?;
        return Ok(text);
    }
    std::fs::read_to_string(source).map_err(|e| CliError::Usage(format!("{source}: {e}")))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub struct DiagnoseRun<'a> {
    pub question: &'a str,
    pub trace: &'a str,
    pub options: DiagnoseOptions,
    pub store: &'a Path,
    pub out: Option<&'a Path>,
}

/// Runs the pipeline and stores the report. A failed run leaves its partial
/// artifact under `<store>/failed/`.
pub fn diagnose(pipeline: &Pipeline, run: DiagnoseRun<'_>) -> Result<String, CliError> {
    let store = ReportStore::open(run.store)?;
    let report = match pipeline.diagnose(run.question.trim(), run.trace, &run.options) {
        Ok(report) => report,
        Err(err) => {
            match err.save_partial(run.store) {
                Ok(path) => log::error!("partial artifact saved to {}", path.display()),
                Err(e) => log::error!("could not save partial artifact: {e}"),
            }
            return Err(err.into());
        }
    };
    let id = store.put(&report)?;
    if let Some(out) = run.out {
        write_file(out, &serialize_report(&report).map_err(|e| CliError::Io(e.to_string()))?)?;
    }
    Ok(id)
}

/// Parses a `name=path` prediction argument.
pub fn parse_pred_arg(arg: &str) -> Result<(String, PathBuf), String> {
    match arg.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected <name>=<predictions.json>, got `{arg}`")),
    }
}

/// Scores each prediction set, writes `metrics.json` and `table.txt`, and
/// returns the table. With two or more methods the table compares the first
/// against each of the others.
pub fn eval(dataset: &Path, preds: &[(String, PathBuf)], out: &Path) -> Result<String, CliError> {
    if preds.is_empty() {
        return Err(CliError::Usage("at least one --pred is required".into()));
    }
    let samples = load_dataset(dataset).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut methods: Vec<(String, Vec<MetricRow>)> = Vec::new();
    for (name, path) in preds {
        if methods.iter().any(|(n, _)| n == name) {
            return Err(CliError::Usage(format!("method `{name}` given twice")));
        }
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let predictions = parse_predictions(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        methods.push((name.clone(), score_predictions(&samples, &predictions)));
    }

    let usage = |e: cot_inspector_core::eval::EvalError| CliError::Usage(e.to_string());
    let mut per_method = BTreeMap::new();
    for (name, rows) in &methods {
        per_method.insert(name.clone(), json!({"rows": rows, "macro": macro_average(rows).map_err(usage)?}));
    }
    let mut comparisons = Vec::new();
    let mut table = String::new();
    if methods.len() == 1 {
        table = render_rows(&methods[0].0, &methods[0].1)?;
    } else {
        let (first, rest) = methods.split_first().expect("non-empty");
        for (name, rows) in rest {
            let cmp = compare_methods((&first.0, &first.1), (name, rows)).map_err(usage)?;
            let _ = writeln!(table, "{} vs {}", first.0, name);
            table.push_str(&cmp.render_table());
            table.push('\n');
            comparisons.push(cmp);
        }
    }
    let metrics = json!({"methods": per_method, "comparisons": comparisons});
    let mut text = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    text.push('\n');
    write_file(&out.join("metrics.json"), &text)?;
    write_file(&out.join("table.txt"), &table)?;
    Ok(table)
}

fn render_rows(name: &str, rows: &[MetricRow]) -> Result<String, CliError> {
    let mut out = String::new();
    let _ = writeln!(out, "{name}");
    let _ = writeln!(out, "{:<10} {:>8} {:>8} {:>8} {:>8}", "sample", "P", "R", "F1", "Acc");
    let macro_row = macro_average(rows).map_err(|e| CliError::Usage(e.to_string()))?;
    for r in rows.iter().chain(std::iter::once(&macro_row)) {
        let _ = writeln!(
            out,
            "{:<10} {:>8.3} {:>8.3} {:>8.3} {:>8.3}",
            r.sample_id, r.precision, r.recall, r.f1, r.accuracy
        );
    }
    Ok(out)
}

/// Copies a stored report, byte for byte, to `out`.
pub fn export(store: &Path, id: &str, out: &Path) -> Result<(), CliError> {
    let raw = ReportStore::open(store)?.get_raw(id)?;
    write_file(out, &raw)
}
