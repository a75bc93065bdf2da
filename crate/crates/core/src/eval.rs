//! Step-level scoring against gold labels, macro-averaging and per-sample
//! method comparison.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DiagnosisReport, ErrorOrigin, StepIndex};

/// Sentence and verifiable totals of the released 13-sample corpus.
pub const KNOWN_CORPUS_SAMPLES: usize = 13;
pub const KNOWN_CORPUS_SENTENCES: usize = 2030;
pub const KNOWN_CORPUS_VERIFIABLE: usize = 1171;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("schema error at line {line}: {reason}")]
    SchemaError { line: usize, reason: String },
    #[error("could not read dataset: {0}")]
    Io(String),
    #[error("index {0} is outside the scoring universe")]
    OutOfUniverse(StepIndex),
    #[error("no rows to average")]
    EmptyInput,
    #[error("methods cover different samples: {0}")]
    SampleMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSentence {
    pub index: StepIndex,
    pub text: String,
    pub verifiable: bool,
    pub gold_error: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSample {
    pub sample_id: String,
    pub question: String,
    pub sentences: Vec<EvalSentence>,
    #[serde(default)]
    pub count_verifiable: usize,
}

impl EvalSample {
    pub fn universe(&self) -> BTreeSet<StepIndex> {
        self.sentences.iter().filter(|s| s.verifiable).map(|s| s.index).collect()
    }

    pub fn gold(&self) -> BTreeSet<StepIndex> {
        self.sentences.iter().filter(|s| s.gold_error).map(|s| s.index).collect()
    }
}

/// Totals reported after loading, with the known-corpus check result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSummary {
    pub samples: usize,
    pub sentences: usize,
    pub verifiable: usize,
    /// `Some(false)` when a 13-sample file misses the published totals.
    pub matches_known_totals: Option<bool>,
}

pub fn summarize(samples: &[EvalSample]) -> DatasetSummary {
    let sentences = samples.iter().map(|s| s.sentences.len()).sum();
    let verifiable = samples.iter().map(|s| s.count_verifiable).sum();
    DatasetSummary {
        samples: samples.len(),
        sentences,
        verifiable,
        matches_known_totals: (samples.len() == KNOWN_CORPUS_SAMPLES)
            .then_some(sentences == KNOWN_CORPUS_SENTENCES && verifiable == KNOWN_CORPUS_VERIFIABLE),
    }
}

pub fn load_dataset(path: &Path) -> Result<Vec<EvalSample>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
    parse_dataset(&text)
}

/// One sample per non-blank line. Warns when a 13-sample corpus does not
/// match the published totals.
pub fn parse_dataset(text: &str) -> Result<Vec<EvalSample>, EvalError> {
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let schema = |reason: String| EvalError::SchemaError { line: line_no, reason };
        let mut de = serde_json::Deserializer::from_str(line);
        let mut sample: EvalSample =
            serde_path_to_error::deserialize(&mut de).map_err(|e| schema(format!("{}: {}", e.path(), e.inner())))?;
        let mut seen = BTreeSet::new();
        for s in &sample.sentences {
            if s.gold_error && !s.verifiable {
                return Err(schema(format!("sentence {} has gold_error on a non-verifiable sentence", s.index)));
            }
            if !seen.insert(s.index) {
                return Err(schema(format!("duplicate sentence index {}", s.index)));
            }
        }
        let counted = sample.sentences.iter().filter(|s| s.verifiable).count();
        if sample.count_verifiable != 0 && sample.count_verifiable != counted {
            return Err(schema(format!(
                "count_verifiable {} disagrees with {counted} verifiable sentences",
                sample.count_verifiable
            )));
        }
        sample.count_verifiable = counted;
        samples.push(sample);
    }
    let summary = summarize(&samples);
    if summary.matches_known_totals == Some(false) {
        log::warn!(
            "13-sample corpus totals {}/{} differ from the expected {KNOWN_CORPUS_SENTENCES}/{KNOWN_CORPUS_VERIFIABLE}",
            summary.sentences,
            summary.verifiable
        );
    }
    Ok(samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub sample_id: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

impl MetricRow {
    pub fn new(sample_id: impl Into<String>, precision: f64, recall: f64, accuracy: f64) -> Self {
        MetricRow {
            sample_id: sample_id.into(),
            precision,
            recall,
            f1: f1(precision, recall),
            accuracy,
        }
    }

    /// Whether f1 agrees with precision and recall. Holds for per-sample
    /// rows; a macro row averages f1 independently and need not satisfy it.
    pub fn f1_consistent(&self) -> bool {
        (self.f1 - f1(self.precision, self.recall)).abs() <= 1e-12
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 { 0.0 } else { num as f64 / den as f64 }
}

pub fn score_sample(
    sample_id: &str,
    pred: &BTreeSet<StepIndex>,
    gold: &BTreeSet<StepIndex>,
    universe: &BTreeSet<StepIndex>,
) -> Result<MetricRow, EvalError> {
    if let Some(&outside) = pred.iter().chain(gold).find(|i| !universe.contains(i)) {
        return Err(EvalError::OutOfUniverse(outside));
    }
    let tp = pred.intersection(gold).count();
    let fp = pred.len() - tp;
    let fn_ = gold.len() - tp;
    let tn = universe.len() - tp - fp - fn_;
    Ok(MetricRow::new(sample_id, ratio(tp, tp + fp), ratio(tp, tp + fn_), ratio(tp + tn, universe.len())))
}

/// Field-wise arithmetic mean.
pub fn macro_average(rows: &[MetricRow]) -> Result<MetricRow, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&MetricRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    Ok(MetricRow {
        sample_id: "macro".to_string(),
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        f1: mean(|r| r.f1),
        accuracy: mean(|r| r.accuracy),
    })
}

/// Numeric ids compare as numbers, everything else as text.
pub fn compare_sample_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        _ => a.cmp(b),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub sample_id: String,
    pub a: MetricRow,
    pub b: MetricRow,
    pub delta_precision: f64,
    pub delta_recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub method_a: String,
    pub method_b: String,
    pub rows: Vec<DeltaRow>,
    pub macro_row: DeltaRow,
}

/// Per-sample `a - b` deltas plus the macro row, sorted by sample id.
pub fn compare_methods(
    method_a: (&str, &[MetricRow]),
    method_b: (&str, &[MetricRow]),
) -> Result<Comparison, EvalError> {
    let index = |rows: &[MetricRow]| -> BTreeMap<String, MetricRow> {
        rows.iter().map(|r| (r.sample_id.clone(), r.clone())).collect()
    };
    let (a, b) = (index(method_a.1), index(method_b.1));
    if a.len() != method_a.1.len() || b.len() != method_b.1.len() {
        return Err(EvalError::SampleMismatch("duplicate sample id".into()));
    }
    let ids_a: BTreeSet<&String> = a.keys().collect();
    let ids_b: BTreeSet<&String> = b.keys().collect();
    if ids_a != ids_b {
        let diff: Vec<&str> = ids_a.symmetric_difference(&ids_b).map(|s| s.as_str()).collect();
        return Err(EvalError::SampleMismatch(diff.join(", ")));
    }
    let delta = |id: &str, x: &MetricRow, y: &MetricRow| DeltaRow {
        sample_id: id.to_string(),
        a: x.clone(),
        b: y.clone(),
        delta_precision: x.precision - y.precision,
        delta_recall: x.recall - y.recall,
    };
    let mut ids: Vec<&String> = ids_a.into_iter().collect();
    ids.sort_by(|x, y| compare_sample_ids(x, y));
    let rows: Vec<DeltaRow> = ids.iter().map(|id| delta(id, &a[*id], &b[*id])).collect();
    let macro_a = macro_average(method_a.1)?;
    let macro_b = macro_average(method_b.1)?;
    Ok(Comparison {
        method_a: method_a.0.to_string(),
        method_b: method_b.0.to_string(),
        macro_row: delta("macro", &macro_a, &macro_b),
        rows,
    })
}

impl Comparison {
    /// Aligned plain-text table.
    pub fn render_table(&self) -> String {
        let (a, b) = (&self.method_a, &self.method_b);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "sample",
            format!("{}.P", short(a)),
            format!("{}.R", short(a)),
            format!("{}.F1", short(a)),
            format!("{}.P", short(b)),
            format!("{}.R", short(b)),
            format!("{}.F1", short(b)),
            "dP",
            "dR"
        );
        for row in self.rows.iter().chain(std::iter::once(&self.macro_row)) {
            let _ = writeln!(
                out,
                "{:<10} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>+8.3} {:>+8.3}",
                row.sample_id,
                row.a.precision,
                row.a.recall,
                row.a.f1,
                row.b.precision,
                row.b.recall,
                row.b.f1,
                row.delta_precision,
                row.delta_recall
            );
        }
        out
    }
}

fn short(name: &str) -> String {
    name.chars().take(5).collect()
}

/// Among false positives, the fraction whose annotation is Propagated.
pub fn propagated_fp_fraction(report: &DiagnosisReport, gold: &BTreeSet<StepIndex>) -> f64 {
    let mut fps = 0usize;
    let mut propagated = 0usize;
    for step in report.error_steps().difference(gold) {
        fps += 1;
        let is_core = report.errors.iter().any(|e| e.step == *step && e.origin == ErrorOrigin::Core);
        if !is_core {
            propagated += 1;
        }
    }
    ratio(propagated, fps)
}

/// Predicted error indices per sample, as stored in `{sample_id: [indices]}`
/// prediction files.
pub type Predictions = BTreeMap<String, BTreeSet<StepIndex>>;

pub fn parse_predictions(text: &str) -> Result<Predictions, EvalError> {
    serde_json::from_str(text).map_err(|e| EvalError::SchemaError { line: e.line(), reason: e.to_string() })
}

/// Scores every sample against one prediction set. Predictions outside a
/// sample's verifiable universe are dropped with a warning; samples absent
/// from the predictions score as empty predictions.
pub fn score_predictions(samples: &[EvalSample], predictions: &Predictions) -> Vec<MetricRow> {
    let empty = BTreeSet::new();
    samples
        .iter()
        .map(|s| {
            let universe = s.universe();
            let raw = predictions.get(&s.sample_id).unwrap_or(&empty);
            let pred: BTreeSet<StepIndex> = raw.intersection(&universe).copied().collect();
            if pred.len() != raw.len() {
                log::warn!("sample {}: {} predictions outside the verifiable universe dropped", s.sample_id, raw.len() - pred.len());
            }
            score_sample(&s.sample_id, &pred, &s.gold(), &universe).expect("restricted to universe")
        })
        .collect()
}
