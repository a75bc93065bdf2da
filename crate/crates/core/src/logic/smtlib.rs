//! Lowers a [`FormalBundle`] to an SMT-LIB v2 script.

use super::formula::{lower_formula, FormulaError, Symbols};
use super::FormalBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckMode {
    /// Premises plus the target: unsat means the target contradicts them.
    Consistency,
    /// Premises plus the negated target: unsat means the target follows.
    Entailment,
}

impl CheckMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckMode::Consistency => "consistency",
            CheckMode::Entailment => "entailment",
        }
    }
}

/// Deterministic script text: identical bundles give identical bytes.
pub fn emit_solver_script(bundle: &FormalBundle, mode: CheckMode) -> Result<String, FormulaError> {
    let symbols = Symbols::from_declarations(&bundle.declarations)?;
    let mut lines = vec![format!("; {} check", mode.as_str()), "(set-logic ALL)".to_string()];
    lines.extend(symbols.smt_declarations());
    for (label, items) in [("constraint", &bundle.constraints), ("statement", &bundle.statements)] {
        for (i, src) in items.iter().enumerate() {
            let term = lower_formula(&symbols, src).map_err(|e| label_error(e, &format!("{label} {}", i + 1)))?;
            lines.push(format!("; {label} {}: {}", i + 1, one_line(src)));
            lines.push(format!("(assert {term})"));
        }
    }
    let target = lower_formula(&symbols, &bundle.target.formula).map_err(|e| label_error(e, "target"))?;
    lines.push(format!("; target: {}", one_line(&bundle.target.formula)));
    lines.push(match mode {
        CheckMode::Consistency => format!("(assert {target})"),
        CheckMode::Entailment => format!("(assert (not {target}))"),
    });
    lines.push("(check-sat)".to_string());
    let mut script = lines.join("\n");
    script.push('\n');
    Ok(script)
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn label_error(e: FormulaError, label: &str) -> FormulaError {
    match e {
        FormulaError::Syntax(m) => FormulaError::Syntax(format!("{label}: {m}")),
        FormulaError::SortMismatch(m) => FormulaError::SortMismatch(format!("{label}: {m}")),
        FormulaError::Arity(m) => FormulaError::Arity(format!("{label}: {m}")),
        FormulaError::Unsupported(m) => FormulaError::Unsupported(format!("{label}: {m}")),
        other => other,
    }
}
