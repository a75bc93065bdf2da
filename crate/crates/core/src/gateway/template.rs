use std::collections::BTreeMap;
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::GatewayError;

static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\{([A-Za-z_][A-Za-z0-9_]*)\}").expect("valid regex"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TemplateName {
    StepClassification,
    Verifiability,
    PremiseTree,
    NlToSymbolic,
    SymbolicToSolver,
    SectionStructuring,
    ClaimDecomposition,
    StanceJudgment,
}

impl TemplateName {
    pub const ALL: [TemplateName; 8] = [
        TemplateName::StepClassification,
        TemplateName::Verifiability,
        TemplateName::PremiseTree,
        TemplateName::NlToSymbolic,
        TemplateName::SymbolicToSolver,
        TemplateName::SectionStructuring,
        TemplateName::ClaimDecomposition,
        TemplateName::StanceJudgment,
    ];
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A prompt body with `{NAME}` placeholders.
///
/// Braces that do not enclose an identifier (JSON examples in the body) are
/// left alone. Some placeholders carry a default that applies when the caller
/// does not supply them.
#[derive(Debug)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub body: &'static str,
    defaults: &'static [(&'static str, &'static str)],
}

static TEMPLATES: [PromptTemplate; 8] = [
    PromptTemplate {
        name: TemplateName::StepClassification,
        body: include_str!("../../prompts/step_classification.txt"),
        defaults: &[],
    },
    PromptTemplate {
        name: TemplateName::Verifiability,
        body: include_str!("../../prompts/verifiability.txt"),
        defaults: &[],
    },
    PromptTemplate {
        name: TemplateName::PremiseTree,
        body: include_str!("../../prompts/premise_tree.txt"),
        defaults: &[("fewshot_template", "")],
    },
    PromptTemplate {
        name: TemplateName::NlToSymbolic,
        body: include_str!("../../prompts/nl_to_symbolic.txt"),
        defaults: &[("declarations_and_constraints", "[]"), ("repair_note", "")],
    },
    PromptTemplate {
        name: TemplateName::SymbolicToSolver,
        body: include_str!("../../prompts/symbolic_to_solver.txt"),
        defaults: &[],
    },
    PromptTemplate {
        name: TemplateName::SectionStructuring,
        body: include_str!("../../prompts/section_structuring.txt"),
        defaults: &[],
    },
    PromptTemplate {
        name: TemplateName::ClaimDecomposition,
        body: include_str!("../../prompts/claim_decomposition.txt"),
        defaults: &[],
    },
    PromptTemplate {
        name: TemplateName::StanceJudgment,
        body: include_str!("../../prompts/stance_judgment.txt"),
        defaults: &[],
    },
];

/// Few-shot block bundled for the premise prompt.
pub const PREMISE_FEWSHOT: &str = include_str!("../../prompts/premise_fewshot.txt");

impl PromptTemplate {
    pub fn get(name: TemplateName) -> &'static PromptTemplate {
        TEMPLATES
            .iter()
            .find(|t| t.name == name)
            .expect("every template name has a body")
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = Vec::new();
        for cap in PLACEHOLDER.captures_iter(self.body) {
            let name = cap.get(1).expect("group 1").as_str();
            if !out.contains(&name) {
                out.push(name);
            }
        }
        out
    }

    pub fn render(&self, variables: &BTreeMap<String, String>) -> Result<String, GatewayError> {
        let lookup = |name: &str| -> Option<&str> {
            variables.get(name).map(String::as_str).or_else(|| {
                self.defaults
                    .iter()
                    .find(|(k, _)| *k == name)
                    .map(|(_, v)| *v)
            })
        };
        if let Some(missing) = self.placeholders().into_iter().find(|p| lookup(p).is_none()) {
            return Err(GatewayError::MissingVariable(missing.to_string()));
        }
        Ok(PLACEHOLDER
            .replace_all(self.body, |cap: &regex::Captures<'_>| {
                lookup(&cap[1]).unwrap_or_default().to_string()
            })
            .into_owned())
    }
}

pub fn render(name: TemplateName, variables: &BTreeMap<String, String>) -> Result<String, GatewayError> {
    PromptTemplate::get(name).render(variables)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn premise_prompt_names_the_question_as_step_zero() {
        let out = render(
            TemplateName::PremiseTree,
            &vars(&[("TASK_QUESTION", "Q"), ("COT_CONTEXT", ""), ("COT_STEP", "S")]),
        )
        .unwrap();
        assert!(out.contains("Question (Step 0):\nQ\n"));
        assert!(out.contains("Next step to analyze:\nS\n"));
    }

    #[test]
    fn missing_variable_is_reported() {
        let err = render(TemplateName::StepClassification, &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, GatewayError::MissingVariable(name) if name == "TASK_QUESTION"));
    }

    #[test]
    fn rendering_is_pure_and_verbatim() {
        let v = vars(&[("TASK_QUESTION", "What is {x}?"), ("FULL_COT_STEP", "Step 1: a")]);
        let a = render(TemplateName::StepClassification, &v).unwrap();
        let b = render(TemplateName::StepClassification, &v).unwrap();
        assert_eq!(a, b);
        // substituted text is not re-scanned
        assert!(a.contains("What is {x}?"));
        // JSON braces in the body survive
        assert!(a.contains("\"<step_index>\": {"));
        let body = PromptTemplate::get(TemplateName::StepClassification).body;
        assert_eq!(
            a.len(),
            body.len() - "{TASK_QUESTION}{FULL_COT_STEP}".len() + "What is {x}?Step 1: a".len()
        );
    }

    #[test]
    fn every_template_renders_with_its_placeholders() {
        for name in TemplateName::ALL {
            let t = PromptTemplate::get(name);
            let v: BTreeMap<String, String> = t
                .placeholders()
                .into_iter()
                .map(|p| (p.to_string(), format!("<{p}>")))
                .collect();
            let out = t.render(&v).unwrap();
            assert!(!PLACEHOLDER.is_match(&out), "{name} left a placeholder");
        }
    }
}
